//! Observables from pattern tables: populations, parity correlations, Poisson
//! error bars and the GHZ fidelity witness.
//!
//! For n arms the witness is
//! `F = ½(P_H…H + P_V…V) + (1/2n) Σ_{k=0}^{n−1} (−1)^k ⟨M_k^⊗n⟩` with
//! `M_k = cos θ σx + sin θ σy`, `θ = kπ/n`. This equals the GHZ fidelity exactly.

use std::fmt;

use thiserror::Error;

use crate::experiment::{CoincidenceHistogram, DetectionPattern, MeasurementSetting, OutcomeDistribution, PatternTable};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("setting {0} has no events")]
    Empty(String),
    #[error("expected setting {expected}, found {found}")]
    SettingMismatch { expected: String, found: String },
    #[error("tables disagree on the number of arms ({0} vs {1})")]
    ArmMismatch(usize, usize),
    #[error("coefficient vector has {found} entries, expected {expected}")]
    CoefficientLength { expected: usize, found: usize },
    #[error("missing settings: {}", .0.join(", "))]
    MissingSettings(Vec<String>),
}

/// Anything with a weight per detection pattern.
pub trait PatternData {
    fn setting(&self) -> &MeasurementSetting;
    fn n_arms(&self) -> usize;
    /// Counts or probabilities, indexed by pattern bits.
    fn weights(&self) -> Vec<f64>;
    /// Exact probabilities carry no counting noise.
    fn is_exact(&self) -> bool;
    fn n_events(&self) -> u64;
}

impl PatternData for CoincidenceHistogram {
    fn setting(&self) -> &MeasurementSetting {
        CoincidenceHistogram::setting(self)
    }

    fn n_arms(&self) -> usize {
        CoincidenceHistogram::n_arms(self)
    }

    fn weights(&self) -> Vec<f64> {
        self.counts().iter().map(|&c| c as f64).collect()
    }

    fn is_exact(&self) -> bool {
        false
    }

    fn n_events(&self) -> u64 {
        self.total()
    }
}

impl PatternData for OutcomeDistribution {
    fn setting(&self) -> &MeasurementSetting {
        OutcomeDistribution::setting(self)
    }

    fn n_arms(&self) -> usize {
        OutcomeDistribution::n_arms(self)
    }

    fn weights(&self) -> Vec<f64> {
        self.conditional().to_vec()
    }

    fn is_exact(&self) -> bool {
        true
    }

    fn n_events(&self) -> u64 {
        0
    }
}

impl PatternData for PatternTable {
    fn setting(&self) -> &MeasurementSetting {
        PatternTable::setting(self)
    }

    fn n_arms(&self) -> usize {
        match self {
            PatternTable::Counts(h) => h.n_arms(),
            PatternTable::Exact(d) => d.n_arms(),
        }
    }

    fn weights(&self) -> Vec<f64> {
        match self {
            PatternTable::Counts(h) => h.weights(),
            PatternTable::Exact(d) => d.weights(),
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self, PatternTable::Exact(_))
    }

    fn n_events(&self) -> u64 {
        match self {
            PatternTable::Counts(h) => h.total(),
            PatternTable::Exact(_) => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservableResult {
    pub value: f64,
    /// One standard deviation.
    pub sigma: f64,
    pub n_events: u64,
}

/// A ratio that may have a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Unbounded,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Self {
        if den > 0.0 {
            Ratio::Finite(num / den)
        } else {
            Ratio::Unbounded
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            Ratio::Finite(x) => Some(*x),
            Ratio::Unbounded => None,
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ratio::Finite(x) => write!(f, "{x}"),
            Ratio::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// `Σ_j c_j N_j / N` with its first-order (delta-method) standard deviation
/// `√(Σ_j (c_j − v)² N_j) / N`, which accounts for the shared normalization.
/// Exact tables give σ = 0.
pub fn linear_form(coeffs: &[f64], data: &impl PatternData) -> Result<ObservableResult, AnalysisError> {
    let w = data.weights();
    if coeffs.len() != w.len() {
        return Err(AnalysisError::CoefficientLength {
            expected: w.len(),
            found: coeffs.len(),
        });
    }
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(AnalysisError::Empty(data.setting().label()));
    }
    let value = coeffs.iter().zip(&w).map(|(c, n)| c * n).sum::<f64>() / total;
    let sigma = if data.is_exact() {
        0.0
    } else {
        coeffs.iter().zip(&w).map(|(c, n)| (c - value).powi(2) * n).sum::<f64>().sqrt() / total
    };
    Ok(ObservableResult {
        value,
        sigma,
        n_events: data.n_events(),
    })
}

/// Standard deviation of a linear form under Poisson counting statistics.
pub fn poisson_propagate(coeffs: &[f64], data: &impl PatternData) -> Result<f64, AnalysisError> {
    Ok(linear_form(coeffs, data)?.sigma)
}

fn require_setting(data: &impl PatternData, expected: &MeasurementSetting) -> Result<(), AnalysisError> {
    if data.setting() != expected {
        return Err(AnalysisError::SettingMismatch {
            expected: expected.label(),
            found: data.setting().label(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Populations {
    pub n_arms: usize,
    pub all_h: ObservableResult,
    pub all_v: ObservableResult,
    /// ½(P_H…H + P_V…V).
    pub population_term: ObservableResult,
    /// P_H…H + P_V…V.
    pub population_sum: f64,
    /// Mean of the two desired patterns over the mean of all others.
    pub snr: Ratio,
}

pub fn populations(data: &impl PatternData) -> Result<Populations, AnalysisError> {
    require_setting(data, &MeasurementSetting::Computational)?;
    let n = data.n_arms();
    let size = 1usize << n;
    let (h, v) = (0, size - 1);
    let unit = |idx: &[usize], c: f64| {
        let mut coeffs = vec![0.0; size];
        for &i in idx {
            coeffs[i] = c;
        }
        coeffs
    };
    let all_h = linear_form(&unit(&[h], 1.0), data)?;
    let all_v = linear_form(&unit(&[v], 1.0), data)?;
    let population_term = linear_form(&unit(&[h, v], 0.5), data)?;

    let w = data.weights();
    let desired = (w[h] + w[v]) / 2.0;
    let others: f64 = w.iter().enumerate().filter(|(i, _)| *i != h && *i != v).map(|(_, x)| x).sum();
    let snr = Ratio::of(desired, others / (size - 2) as f64);
    Ok(Populations {
        n_arms: n,
        all_h,
        all_v,
        population_term,
        population_sum: all_h.value + all_v.value,
        snr,
    })
}

fn parity_coeffs(n: usize) -> Vec<f64> {
    (0..1u32 << n).map(|b| DetectionPattern::new(b, n).parity()).collect()
}

/// `⟨M_k^⊗n⟩`: mean product of ±1 outcomes at setting k.
pub fn m_k_expectation(data: &impl PatternData, k: u32) -> Result<ObservableResult, AnalysisError> {
    require_setting(data, &MeasurementSetting::Phase { k })?;
    linear_form(&parity_coeffs(data.n_arms()), data)
}

/// Correlation of a phase-setting table together with its k.
pub fn correlation(data: &impl PatternData) -> Result<(u32, ObservableResult), AnalysisError> {
    match data.setting() {
        MeasurementSetting::Phase { k } => Ok((*k, m_k_expectation(data, *k)?)),
        other => Err(AnalysisError::SettingMismatch {
            expected: "k0..k7".into(),
            found: other.label(),
        }),
    }
}

/// Mean weight of the patterns with the parity a GHZ state gives at this setting,
/// over the mean weight of the others.
pub fn correlation_snr(data: &impl PatternData) -> Result<Ratio, AnalysisError> {
    let (k, _) = correlation(data)?;
    let expected = if k % 2 == 0 { 1.0 } else { -1.0 };
    let n = data.n_arms();
    let w = data.weights();
    let (mut good, mut bad) = (0.0, 0.0);
    for (b, x) in w.iter().enumerate() {
        if DetectionPattern::new(b as u32, n).parity() == expected {
            good += x;
        } else {
            bad += x;
        }
    }
    // Both classes hold half of the patterns.
    Ok(Ratio::of(good, bad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Significance {
    Sigmas(f64),
    /// Zero error bar with F ≠ ½.
    Unbounded { positive: bool },
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Significance::Sigmas(x) => write!(f, "{x}"),
            Significance::Unbounded { positive: true } => f.write_str("unbounded"),
            Significance::Unbounded { positive: false } => f.write_str("-unbounded"),
        }
    }
}

/// `(F − ½) / σ_F`.
pub fn significance(fidelity: f64, sigma: f64) -> Significance {
    let excess = fidelity - 0.5;
    if sigma > 0.0 {
        Significance::Sigmas(excess / sigma)
    } else if excess == 0.0 {
        Significance::Sigmas(0.0)
    } else {
        Significance::Unbounded { positive: excess > 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessReport {
    pub n_arms: usize,
    pub population_term: ObservableResult,
    pub population_sum: f64,
    pub hv_snr: Ratio,
    /// Raw `⟨M_k^⊗n⟩` for k = 0 … n−1, unsigned.
    pub correlations: Vec<(u32, ObservableResult)>,
    pub fidelity: ObservableResult,
    pub entangled: bool,
    pub significance: Significance,
}

impl WitnessReport {
    /// `(−1)^k ⟨M_k^⊗n⟩` per k.
    pub fn signed_correlations(&self) -> Vec<(u32, f64, f64)> {
        self.correlations
            .iter()
            .map(|(k, r)| (*k, if k % 2 == 0 { r.value } else { -r.value }, r.sigma))
            .collect()
    }

    pub fn mean_signed_correlation(&self) -> f64 {
        let s = self.signed_correlations();
        s.iter().map(|x| x.1).sum::<f64>() / s.len() as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("n_arms", self.n_arms.to_string());
        line("population_term", self.population_term.value.to_string());
        line("population_term_sigma", self.population_term.sigma.to_string());
        line("population_sum", self.population_sum.to_string());
        line("hv_snr", self.hv_snr.to_string());
        for (k, r) in &self.correlations {
            line(&format!("m_k_{k}"), r.value.to_string());
            line(&format!("m_k_{k}_sigma"), r.sigma.to_string());
        }
        line("fidelity", self.fidelity.value.to_string());
        line("sigma", self.fidelity.sigma.to_string());
        line("significance", self.significance.to_string());
        line("entangled", self.entangled.to_string());
        s
    }
}

/// Assemble the witness from populations and all n correlations.
pub fn fidelity_witness(pop: &Populations, correlations: &[(u32, ObservableResult)]) -> Result<WitnessReport, AnalysisError> {
    let n = pop.n_arms;
    let mut sorted: Vec<Option<ObservableResult>> = vec![None; n];
    for (k, r) in correlations {
        if (*k as usize) < n {
            sorted[*k as usize] = Some(*r);
        }
    }
    let missing: Vec<String> = (0..n).filter(|&k| sorted[k].is_none()).map(|k| format!("k{k}")).collect();
    if !missing.is_empty() {
        return Err(AnalysisError::MissingSettings(missing));
    }
    let corr: Vec<(u32, ObservableResult)> = sorted.into_iter().enumerate().map(|(k, r)| (k as u32, r.expect("checked"))).collect();

    let scale = 1.0 / (2 * n) as f64;
    let signed: f64 = corr.iter().map(|(k, r)| if k % 2 == 0 { r.value } else { -r.value }).sum();
    let value = pop.population_term.value + scale * signed;
    let var = pop.population_term.sigma.powi(2) + corr.iter().map(|(_, r)| (scale * r.sigma).powi(2)).sum::<f64>();
    let sigma = var.sqrt();
    let n_events = pop.population_term.n_events + corr.iter().map(|(_, r)| r.n_events).sum::<u64>();
    Ok(WitnessReport {
        n_arms: n,
        population_term: pop.population_term,
        population_sum: pop.population_sum,
        hv_snr: pop.snr,
        correlations: corr,
        fidelity: ObservableResult { value, sigma, n_events },
        entangled: value > 0.5,
        significance: significance(value, sigma),
    })
}

/// Witness from a set of tables: one H/V table and one per k. Missing settings are
/// all listed in the error.
pub fn witness_from_tables<T: PatternData>(tables: &[T]) -> Result<WitnessReport, AnalysisError> {
    let hv = tables.iter().find(|t| *t.setting() == MeasurementSetting::Computational);
    let n = match (hv, tables.first()) {
        (Some(t), _) | (None, Some(t)) => t.n_arms(),
        (None, None) => 8,
    };
    let mut missing = Vec::new();
    if hv.is_none() {
        missing.push("HV".to_string());
    }
    let mut corr = Vec::new();
    for k in 0..n as u32 {
        match tables.iter().find(|t| *t.setting() == MeasurementSetting::Phase { k }) {
            Some(t) => {
                if t.n_arms() != n {
                    return Err(AnalysisError::ArmMismatch(n, t.n_arms()));
                }
                corr.push((k, m_k_expectation(t, k)?));
            }
            None => missing.push(format!("k{k}")),
        }
    }
    if !missing.is_empty() {
        return Err(AnalysisError::MissingSettings(missing));
    }
    let pop = populations(hv.expect("checked"))?;
    fidelity_witness(&pop, &corr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(setting: MeasurementSetting, n: usize, entries: &[(u32, u64)]) -> CoincidenceHistogram {
        let mut counts = vec![0; 1 << n];
        for &(b, c) in entries {
            counts[b as usize] = c;
        }
        CoincidenceHistogram::new(setting, n, counts, 1.0, None)
    }

    #[test]
    fn binomial_sigma_for_two_equal_patterns() {
        let h = hist(MeasurementSetting::Computational, 8, &[(0, 200), (255, 200)]);
        let p = populations(&h).unwrap();
        assert!((p.all_h.value - 0.5).abs() < 1e-15);
        assert!((p.all_h.sigma - 0.025).abs() < 1e-15);
        assert_eq!(p.snr, Ratio::Unbounded);
        // The population term itself has no spread here.
        assert_eq!(p.population_term.sigma, 0.0);
    }

    #[test]
    fn full_weight_pattern_has_zero_sigma() {
        let h = hist(MeasurementSetting::Computational, 8, &[(0, 100)]);
        assert_eq!(poisson_propagate(&{
            let mut c = vec![0.0; 256];
            c[0] = 1.0;
            c
        }, &h).unwrap(), 0.0);
    }

    #[test]
    fn uniform_noise_floor_snr() {
        let mut counts = vec![1u64; 256];
        counts[0] = 51;
        counts[255] = 49;
        let h = CoincidenceHistogram::new(MeasurementSetting::Computational, 8, counts, 1.0, None);
        assert_eq!(populations(&h).unwrap().snr, Ratio::Finite(50.0));
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        let h = hist(MeasurementSetting::Computational, 8, &[]);
        assert!(matches!(populations(&h), Err(AnalysisError::Empty(_))));
        let k = hist(MeasurementSetting::Phase { k: 1 }, 8, &[(0, 1)]);
        assert!(matches!(m_k_expectation(&k, 2), Err(AnalysisError::SettingMismatch { .. })));
        assert!(matches!(populations(&k), Err(AnalysisError::SettingMismatch { .. })));
    }

    #[test]
    fn single_even_event() {
        let h = hist(MeasurementSetting::Phase { k: 0 }, 8, &[(0b11, 1)]);
        let r = m_k_expectation(&h, 0).unwrap();
        assert_eq!((r.value, r.sigma, r.n_events), (1.0, 0.0, 1));
    }

    #[test]
    fn correlation_snr_from_parity_classes() {
        let h = hist(MeasurementSetting::Phase { k: 1 }, 2, &[(0, 10), (1, 40)]);
        // k odd: odd parity is the expected class.
        assert_eq!(correlation_snr(&h).unwrap(), Ratio::Finite(4.0));
    }

    #[test]
    fn significance_cases() {
        match significance(0.708, 0.016) {
            Significance::Sigmas(s) => assert!((s - 13.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(significance(1.0, 0.0), Significance::Unbounded { positive: true });
        assert_eq!(significance(0.4, 0.0).to_string(), "-unbounded");
    }

    #[test]
    fn missing_correlations_are_listed() {
        let hv = hist(MeasurementSetting::Computational, 2, &[(0, 1)]);
        let k0 = hist(MeasurementSetting::Phase { k: 0 }, 2, &[(0, 1)]);
        let err = witness_from_tables(&[hv, k0]).unwrap_err();
        assert_eq!(err, AnalysisError::MissingSettings(vec!["k1".into()]));
    }
}
