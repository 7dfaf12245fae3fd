//! The multi-source apparatus: emission, synthesis, fusion, analyzers, bucket
//! detection, coincidence filtering and counting.
//!
//! Mixed states are ensembles. Each ensemble member fixes the spectral tags of every
//! source (see [`PdcSource::members`]); within a member, emission patterns (pair
//! numbers per source) are simulated separately and combined incoherently, since
//! the sources carry no common phase reference.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{AmplitudeState, FockError, ModeRegistry, Occupation, Polarization};
use crate::optics::{analyzer_waveplates, apply_all, LinearElement, OpticsError};
use crate::sources::{tag_order, PdcSource, SourceError, SourceTags};
use crate::topology::{e_arm, o_arm, EmissionPattern, FusionTopology, TopologyError};

/// Largest supported number of output arms (patterns are stored densely).
pub const MAX_ARMS: usize = 20;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("topology has {expected} sources but {found} were given")]
    SourceCount { expected: usize, found: usize },
    #[error("source {index} sits on arms ({found_a}, {found_b}), expected ({want_a}, {want_b})")]
    SourceArms {
        index: usize,
        found_a: String,
        found_b: String,
        want_a: String,
        want_b: String,
    },
    #[error("{0} arms exceed the supported maximum")]
    TooManyArms(usize),
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("setting '{0}' is not valid here")]
    BadSetting(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasurementSetting {
    /// H/V basis: D+ is H, D− is V.
    Computational,
    /// Every arm measures M_θ with θ = kπ/n for n arms.
    Phase { k: u32 },
    /// Per-arm angles, each in [0, 2π).
    Angles(Vec<f64>),
}

impl MeasurementSetting {
    /// HV followed by k = 0 … n−1.
    pub fn standard(n_arms: usize) -> Vec<Self> {
        std::iter::once(Self::Computational)
            .chain((0..n_arms as u32).map(|k| Self::Phase { k }))
            .collect()
    }

    pub fn label(&self) -> String {
        match self {
            Self::Computational => "HV".into(),
            Self::Phase { k } => format!("k{k}"),
            Self::Angles(a) => {
                let parts: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                format!("angles:{}", parts.join(";"))
            }
        }
    }

    /// Analyzer angle per arm, `None` in the H/V basis.
    pub fn angles(&self, n_arms: usize) -> Result<Option<Vec<f64>>, ExperimentError> {
        match self {
            Self::Computational => Ok(None),
            Self::Phase { k } => Ok(Some(vec![*k as f64 * PI / n_arms as f64; n_arms])),
            Self::Angles(a) => {
                if a.len() != n_arms || a.iter().any(|t| !(0.0..2.0 * PI).contains(t)) {
                    return Err(ExperimentError::BadSetting(self.label()));
                }
                Ok(Some(a.clone()))
            }
        }
    }

    /// Characters for D+ and D− outcomes.
    pub fn symbols(&self) -> (char, char) {
        match self {
            Self::Computational => ('H', 'V'),
            _ => ('+', '-'),
        }
    }

    /// Stream index used to derive independent random streams per setting.
    pub fn stream(&self) -> u64 {
        match self {
            Self::Computational => 0,
            Self::Phase { k } => 1 + *k as u64,
            Self::Angles(_) => u64::MAX,
        }
    }
}

impl fmt::Display for MeasurementSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for MeasurementSetting {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "HV" {
            return Ok(Self::Computational);
        }
        if let Some(k) = s.strip_prefix('k') {
            return k
                .parse()
                .map(|k| Self::Phase { k })
                .map_err(|_| ExperimentError::BadSetting(s.to_string()));
        }
        if let Some(rest) = s.strip_prefix("angles:") {
            let angles: Result<Vec<f64>, _> = rest.split(';').map(str::parse).collect();
            return angles.map(Self::Angles).map_err(|_| ExperimentError::BadSetting(s.to_string()));
        }
        Err(ExperimentError::BadSetting(s.to_string()))
    }
}

/// One outcome per output arm; bit `i` set means detector D− fired on arm `i+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectionPattern {
    bits: u32,
    n_arms: u8,
}

impl DetectionPattern {
    pub fn new(bits: u32, n_arms: usize) -> Self {
        assert!(n_arms <= MAX_ARMS && bits >> n_arms == 0);
        Self { bits, n_arms: n_arms as u8 }
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn index(&self) -> usize {
        self.bits as usize
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms as usize
    }

    pub fn minus_count(&self) -> u32 {
        self.bits.count_ones()
    }

    /// ±1 product of outcomes.
    pub fn parity(&self) -> f64 {
        if self.minus_count() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn render(&self, symbols: (char, char)) -> String {
        (0..self.n_arms)
            .map(|i| if self.bits >> i & 1 == 1 { symbols.1 } else { symbols.0 })
            .collect()
    }

    pub fn parse(s: &str, symbols: (char, char)) -> Option<Self> {
        let mut bits = 0u32;
        let mut n = 0;
        for (i, c) in s.chars().enumerate() {
            if i >= MAX_ARMS {
                return None;
            }
            if c == symbols.1 {
                bits |= 1 << i;
            } else if c != symbols.0 {
                return None;
            }
            n += 1;
        }
        Some(Self::new(bits, n))
    }
}

/// One of the two detectors behind an analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Detector {
    Plus,
    Minus,
}

/// Accept a raw event (fired `(arm, detector)` pairs, arms from 1) iff every arm has
/// exactly one fired detector. Both detectors on one arm is a discarded nine-photon
/// signature; a silent arm means no n-fold coincidence.
pub fn coincidence_unit_filter(fired: &[(usize, Detector)], n_arms: usize) -> Option<DetectionPattern> {
    let mut seen = vec![(false, false); n_arms];
    for &(arm, d) in fired {
        if arm == 0 || arm > n_arms {
            return None;
        }
        match d {
            Detector::Plus => seen[arm - 1].0 = true,
            Detector::Minus => seen[arm - 1].1 = true,
        }
    }
    let mut bits = 0u32;
    for (i, &(p, m)) in seen.iter().enumerate() {
        match (p, m) {
            (true, false) => {}
            (false, true) => bits |= 1 << i,
            _ => return None,
        }
    }
    Some(DetectionPattern::new(bits, n_arms))
}

/// Threshold detectors with per-photon efficiency and an optional dark-count probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    efficiency: f64,
    dark_count_probability: f64,
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_count_probability: f64) -> Result<Self, ExperimentError> {
        for (name, value) in [("efficiency", efficiency), ("dark_count_probability", dark_count_probability)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ExperimentError::OutOfRange { name, value });
            }
        }
        Ok(Self {
            efficiency,
            dark_count_probability,
        })
    }

    pub fn perfect() -> Self {
        Self {
            efficiency: 1.0,
            dark_count_probability: 0.0,
        }
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }

    pub fn dark_count_probability(&self) -> f64 {
        self.dark_count_probability
    }

    /// Probability that a detector receiving `n` photons clicks.
    pub fn fire(&self, n: u32) -> f64 {
        1.0 - (1.0 - self.dark_count_probability) * (1.0 - self.efficiency).powi(n as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AnalyzerKind {
    /// Direct basis change per arm.
    #[default]
    Abstract,
    /// QWP then HWP in front of the arm's PBS.
    Waveplates,
}

/// Elements per arm that turn its H/V modes into the D+/D− detector modes.
pub fn analyzer_elements_by_arm(
    setting: &MeasurementSetting,
    arms: &[String],
    kind: AnalyzerKind,
    registry: &ModeRegistry,
) -> Result<Vec<Vec<LinearElement>>, ExperimentError> {
    let Some(angles) = setting.angles(arms.len())? else {
        return Ok(vec![Vec::new(); arms.len()]);
    };
    let mut out = Vec::new();
    for (arm, &theta) in arms.iter().zip(&angles) {
        out.push(match kind {
            AnalyzerKind::Abstract => vec![LinearElement::analyzer_basis(theta, arm, registry)?],
            AnalyzerKind::Waveplates => {
                let (q, h) = analyzer_waveplates(theta);
                vec![LinearElement::qwp(q, arm, registry)?, LinearElement::hwp(h, arm, registry)?]
            }
        });
    }
    Ok(out)
}

pub fn analyzer_elements(
    setting: &MeasurementSetting,
    arms: &[String],
    kind: AnalyzerKind,
    registry: &ModeRegistry,
) -> Result<Vec<LinearElement>, ExperimentError> {
    Ok(analyzer_elements_by_arm(setting, arms, kind, registry)?.into_iter().flatten().collect())
}

/// Terms with exactly one photon in each listed arm (and none elsewhere), unnormalized.
pub fn ghz_projector_sector(state: &AmplitudeState, arms: &[String]) -> AmplitudeState {
    let reg = state.registry().clone();
    let arm_index: Vec<Option<usize>> = reg.modes().iter().map(|m| arms.iter().position(|a| *a == m.arm)).collect();
    state.filtered(|occ| {
        let mut per_arm = vec![0u32; arms.len()];
        for (m, c) in occ.iter() {
            match arm_index[m] {
                Some(i) => per_arm[i] += c,
                None => return false,
            }
        }
        per_arm.iter().all(|&c| c == 1)
    })
}

/// Add `weight · Σ |amp|² · P(pattern | occupation)` for every accepted pattern into
/// `out` (indexed by pattern bits). The state must already be in the detector basis:
/// D+ is each arm's H modes, D− its V modes, all spectral tags summed.
pub fn accumulate_detection(state: &AmplitudeState, arms: &[String], detector: &DetectorModel, weight: f64, out: &mut [f64]) {
    let reg = state.registry();
    let n = arms.len();
    let mode_slot: Vec<Option<usize>> = reg
        .modes()
        .iter()
        .map(|m| {
            arms.iter()
                .position(|a| *a == m.arm)
                .map(|i| 2 * i + usize::from(m.pol == Polarization::V))
        })
        .collect();

    let mut signatures: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let mut sig = vec![0u32; 2 * n];
        for (m, c) in occ.iter() {
            if let Some(slot) = mode_slot[m] {
                sig[slot] += c;
            }
        }
        *signatures.entry(sig).or_default() += amp.norm_sqr();
    }

    for (sig, p) in signatures {
        let mut partial: Vec<(u32, f64)> = vec![(0, weight * p)];
        for i in 0..n {
            let (fp, fm) = (detector.fire(sig[2 * i]), detector.fire(sig[2 * i + 1]));
            let plus = fp * (1.0 - fm);
            let minus = (1.0 - fp) * fm;
            let mut next = Vec::with_capacity(partial.len() * 2);
            for &(bits, q) in &partial {
                if plus > 0.0 {
                    next.push((bits, q * plus));
                }
                if minus > 0.0 {
                    next.push((bits | 1 << i, q * minus));
                }
            }
            partial = next;
            if partial.is_empty() {
                break;
            }
        }
        for (bits, q) in partial {
            out[bits as usize] += q;
        }
    }
}

/// Same result as analyzing the state and calling [`accumulate_detection`], computed
/// as `Σ ψ*_a ψ_b Π_arm K_arm(a, b; outcome)` over pairs of input terms. Each arm
/// kernel sums the analyzer output of that arm against the detector response, so
/// the analyzed state is never materialized. Cheap for states with few terms.
pub fn accumulate_detection_pairwise(
    state: &AmplitudeState,
    arms: &[String],
    per_arm: &[Vec<LinearElement>],
    detector: &DetectorModel,
    weight: f64,
    out: &mut [f64],
) -> Result<(), ExperimentError> {
    let reg = state.registry().clone();
    let n = arms.len();
    let arm_of: Vec<Option<usize>> = reg.modes().iter().map(|m| arms.iter().position(|a| *a == m.arm)).collect();
    // Photon number per (arm, tag) is conserved by the analyzers, so only terms that
    // agree on it (and on any modes off the arms) can interfere.
    let mut sites: BTreeMap<(usize, &str), u16> = BTreeMap::new();
    for (m, label) in reg.modes().iter().enumerate() {
        if let Some(a) = arm_of[m] {
            let next = sites.len() as u16;
            sites.entry((a, label.tag.as_str())).or_insert(next);
        }
    }
    let site_of: Vec<Option<u16>> = reg
        .modes()
        .iter()
        .enumerate()
        .map(|(m, l)| arm_of[m].map(|a| sites[&(a, l.tag.as_str())]))
        .collect();

    struct Split {
        parts: Vec<Occupation>,
        amp: Complex64,
    }
    let mut groups: BTreeMap<(Vec<(u16, u32)>, Occupation), Vec<Split>> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let mut parts = vec![Vec::new(); n];
        let mut rest = Vec::new();
        let mut site_counts: BTreeMap<u16, u32> = BTreeMap::new();
        for (m, c) in occ.iter() {
            match arm_of[m] {
                Some(a) => {
                    parts[a].push((m, c));
                    *site_counts.entry(site_of[m].expect("site")).or_default() += c;
                }
                None => rest.push((m, c)),
            }
        }
        let to_occ = |v: &[(usize, u32)]| {
            let mut counts = vec![0u32; reg.len()];
            for &(m, c) in v {
                counts[m] = c;
            }
            Occupation::from_counts(&counts)
        };
        let key = (site_counts.into_iter().collect(), to_occ(&rest));
        groups.entry(key).or_default().push(Split {
            parts: parts.iter().map(|p| to_occ(p)).collect(),
            amp: *amp,
        });
    }

    type Expansion = BTreeMap<Occupation, (Complex64, [f64; 2])>;
    let mut expansions: HashMap<(usize, Occupation), Expansion> = HashMap::new();
    let mut kernels: HashMap<(usize, Occupation, Occupation), [Complex64; 2]> = HashMap::new();
    let mut expansion = |arm: usize, sub: &Occupation| -> Result<Expansion, ExperimentError> {
        if let Some(e) = expansions.get(&(arm, sub.clone())) {
            return Ok(e.clone());
        }
        let single = AmplitudeState::from_map(reg.clone(), state.truncation(), 0.0, BTreeMap::from([(sub.clone(), Complex64::new(1.0, 0.0))]));
        let analyzed = apply_all(&single, &per_arm[arm])?;
        let mut e = Expansion::new();
        for (o, c) in analyzed.terms() {
            let (mut np, mut nm) = (0, 0);
            for (m, k) in o.iter() {
                if reg.label(m).pol == Polarization::H {
                    np += k;
                } else {
                    nm += k;
                }
            }
            let (fp, fm) = (detector.fire(np), detector.fire(nm));
            e.insert(o.clone(), (*c, [fp * (1.0 - fm), (1.0 - fp) * fm]));
        }
        expansions.insert((arm, sub.clone()), e.clone());
        Ok(e)
    };

    for terms in groups.values() {
        for a in 0..terms.len() {
            for b in a..terms.len() {
                let mut partial: Vec<(u32, Complex64)> = vec![(0, terms[a].amp.conj() * terms[b].amp)];
                for arm in 0..n {
                    let (sa, sb) = (&terms[a].parts[arm], &terms[b].parts[arm]);
                    let key = (arm, sa.clone(), sb.clone());
                    let k = match kernels.get(&key) {
                        Some(k) => *k,
                        None => {
                            let (ea, eb) = (expansion(arm, sa)?, expansion(arm, sb)?);
                            let mut k = [Complex64::new(0.0, 0.0); 2];
                            for (o, (ca, f)) in &ea {
                                if let Some((cb, _)) = eb.get(o) {
                                    let c = ca.conj() * cb;
                                    k[0] += c * f[0];
                                    k[1] += c * f[1];
                                }
                            }
                            kernels.insert(key, k);
                            k
                        }
                    };
                    let mut next = Vec::with_capacity(partial.len() * 2);
                    for &(bits, q) in &partial {
                        if k[0] != Complex64::new(0.0, 0.0) {
                            next.push((bits, q * k[0]));
                        }
                        if k[1] != Complex64::new(0.0, 0.0) {
                            next.push((bits | 1 << arm, q * k[1]));
                        }
                    }
                    partial = next;
                    if partial.is_empty() {
                        break;
                    }
                }
                let factor = if a == b { weight } else { 2.0 * weight };
                for (bits, q) in partial {
                    out[bits as usize] += factor * q.re;
                }
            }
        }
    }
    Ok(())
}

/// Accepted-pattern distribution for a pure state whose listed arms feed analyzers.
pub fn state_distribution(
    state: &AmplitudeState,
    arms: &[String],
    setting: &MeasurementSetting,
    detector: &DetectorModel,
    kind: AnalyzerKind,
) -> Result<OutcomeDistribution, ExperimentError> {
    if arms.len() > MAX_ARMS {
        return Err(ExperimentError::TooManyArms(arms.len()));
    }
    let per_arm = analyzer_elements_by_arm(setting, arms, kind, state.registry())?;
    let mut absolute = vec![0.0; 1 << arms.len()];
    accumulate_detection_pairwise(state, arms, &per_arm, detector, 1.0, &mut absolute)?;
    Ok(OutcomeDistribution::from_absolute(setting.clone(), arms.len(), &absolute))
}

/// Exact accepted-pattern probabilities for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    setting: MeasurementSetting,
    n_arms: usize,
    conditional: Vec<f64>,
    accept_probability: f64,
}

impl OutcomeDistribution {
    /// From per-pulse (absolute) pattern probabilities.
    pub fn from_absolute(setting: MeasurementSetting, n_arms: usize, absolute: &[f64]) -> Self {
        let total: f64 = absolute.iter().sum();
        let conditional = if total > 0.0 {
            absolute.iter().map(|p| p / total).collect()
        } else {
            vec![0.0; absolute.len()]
        };
        Self {
            setting,
            n_arms,
            conditional,
            accept_probability: total,
        }
    }

    pub fn new(setting: MeasurementSetting, n_arms: usize, conditional: Vec<f64>, accept_probability: f64) -> Self {
        assert_eq!(conditional.len(), 1 << n_arms);
        Self {
            setting,
            n_arms,
            conditional,
            accept_probability,
        }
    }

    pub fn setting(&self) -> &MeasurementSetting {
        &self.setting
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    /// Probabilities conditioned on an accepted coincidence.
    pub fn conditional(&self) -> &[f64] {
        &self.conditional
    }

    pub fn probability(&self, pattern: DetectionPattern) -> f64 {
        self.conditional[pattern.index()]
    }

    /// Probability per pulse of any accepted coincidence.
    pub fn accept_probability(&self) -> f64 {
        self.accept_probability
    }

    /// Per-pulse probability of `pattern`.
    pub fn absolute(&self, pattern: DetectionPattern) -> f64 {
        self.accept_probability * self.conditional[pattern.index()]
    }

    pub fn to_text(&self) -> String {
        let symbols = self.setting.symbols();
        let mut s = format!(
            "# setting={},kind=exact,accept_probability={}\n",
            self.setting.label(),
            self.accept_probability
        );
        for (i, p) in self.conditional.iter().enumerate() {
            s.push_str(&format!("{},{}\n", DetectionPattern::new(i as u32, self.n_arms).render(symbols), p));
        }
        s
    }
}

/// Counts per accepted pattern for one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    setting: MeasurementSetting,
    n_arms: usize,
    counts: Vec<u64>,
    duration_s: f64,
    seed: Option<u64>,
}

impl CoincidenceHistogram {
    pub fn new(setting: MeasurementSetting, n_arms: usize, counts: Vec<u64>, duration_s: f64, seed: Option<u64>) -> Self {
        assert_eq!(counts.len(), 1 << n_arms);
        Self {
            setting,
            n_arms,
            counts,
            duration_s,
            seed,
        }
    }

    pub fn empty(setting: MeasurementSetting, n_arms: usize) -> Self {
        Self::new(setting, n_arms, vec![0; 1 << n_arms], 0.0, None)
    }

    pub fn setting(&self) -> &MeasurementSetting {
        &self.setting
    }

    pub fn n_arms(&self) -> usize {
        self.n_arms
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, pattern: DetectionPattern) -> u64 {
        self.counts[pattern.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_s
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Sum of two runs of the same setting; durations add and the seed is kept only
    /// if both agree.
    pub fn merged(&self, other: &Self) -> Result<Self, ExperimentError> {
        if self.setting != other.setting || self.n_arms != other.n_arms {
            return Err(ExperimentError::BadSetting(other.setting.label()));
        }
        Ok(Self {
            setting: self.setting.clone(),
            n_arms: self.n_arms,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
            duration_s: self.duration_s + other.duration_s,
            seed: if self.seed == other.seed { self.seed } else { None },
        })
    }

    pub fn to_text(&self) -> String {
        let symbols = self.setting.symbols();
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        let mut s = format!(
            "# setting={},duration_s={},seed={},kind=counts\n",
            self.setting.label(),
            self.duration_s,
            seed
        );
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{}\n", DetectionPattern::new(i as u32, self.n_arms).render(symbols), c));
        }
        s
    }
}

/// Contents of a histogram file.
#[derive(Debug, Clone, PartialEq)]
pub enum PatternTable {
    Counts(CoincidenceHistogram),
    Exact(OutcomeDistribution),
}

impl PatternTable {
    pub fn setting(&self) -> &MeasurementSetting {
        match self {
            PatternTable::Counts(h) => h.setting(),
            PatternTable::Exact(d) => d.setting(),
        }
    }

    pub fn to_text(&self) -> String {
        match self {
            PatternTable::Counts(h) => h.to_text(),
            PatternTable::Exact(d) => d.to_text(),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ExperimentError> {
        let err = |line: usize, msg: &str| ExperimentError::Parse { line, msg: msg.to_string() };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "empty file"))?;
        let header = header.strip_prefix("# ").ok_or_else(|| err(1, "missing '# ' header"))?;
        let mut fields = BTreeMap::new();
        for kv in header.split(',') {
            let (k, v) = kv.split_once('=').ok_or_else(|| err(1, "header field without '='"))?;
            fields.insert(k, v);
        }
        let field = |k: &str| fields.get(k).copied().ok_or_else(|| err(1, &format!("header lacks '{k}'")));
        let setting: MeasurementSetting = field("setting")?.parse().map_err(|_| err(1, "bad setting label"))?;
        let symbols = setting.symbols();
        let kind = field("kind")?;

        let mut rows: Vec<(usize, DetectionPattern, &str)> = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (p, v) = line.split_once(',').ok_or_else(|| err(i + 1, "expected 'pattern,value'"))?;
            let pat = DetectionPattern::parse(p, symbols).ok_or_else(|| err(i + 1, &format!("bad pattern '{p}'")))?;
            rows.push((i + 1, pat, v));
        }
        let n_arms = rows.first().map(|r| r.1.n_arms()).ok_or_else(|| err(2, "no pattern rows"))?;
        if rows.len() != 1 << n_arms {
            return Err(err(rows.last().map_or(2, |r| r.0), &format!("expected {} rows, found {}", 1 << n_arms, rows.len())));
        }
        let mut seen = vec![false; 1 << n_arms];
        for (line, pat, _) in &rows {
            if pat.n_arms() != n_arms || seen[pat.index()] {
                return Err(err(*line, "pattern repeated or of wrong length"));
            }
            seen[pat.index()] = true;
        }

        match kind {
            "counts" => {
                let duration_s: f64 = field("duration_s")?.parse().map_err(|_| err(1, "bad duration_s"))?;
                let seed = match field("seed")? {
                    "none" => None,
                    s => Some(s.parse().map_err(|_| err(1, "bad seed"))?),
                };
                let mut counts = vec![0u64; 1 << n_arms];
                for (line, pat, v) in rows {
                    counts[pat.index()] = v.trim().parse().map_err(|_| err(line, "count is not a non-negative integer"))?;
                }
                Ok(PatternTable::Counts(CoincidenceHistogram::new(setting, n_arms, counts, duration_s, seed)))
            }
            "exact" => {
                let accept: f64 = field("accept_probability")?.parse().map_err(|_| err(1, "bad accept_probability"))?;
                let mut probs = vec![0.0; 1 << n_arms];
                for (line, pat, v) in rows {
                    let p: f64 = v.trim().parse().map_err(|_| err(line, "probability is not a number"))?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(err(line, "probability outside [0, 1]"));
                    }
                    probs[pat.index()] = p;
                }
                Ok(PatternTable::Exact(OutcomeDistribution::new(setting, n_arms, probs, accept)))
            }
            other => Err(err(1, &format!("unknown kind '{other}'"))),
        }
    }
}

/// Poisson-sample counts with mean `rate · P(pattern) · duration` per pattern.
/// The random stream depends on `seed` and the setting, so settings sampled with
/// one base seed are independent.
pub fn sample_counts(dist: &OutcomeDistribution, repetition_rate_hz: f64, duration_s: f64, seed: u64) -> CoincidenceHistogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(dist.setting().stream());
    let n = dist.n_arms();
    let counts = (0..1usize << n)
        .map(|i| {
            let mean = repetition_rate_hz * dist.absolute(DetectionPattern::new(i as u32, n)) * duration_s;
            if mean > 0.0 {
                Poisson::new(mean).map_or(0, |d| d.sample(&mut rng) as u64)
            } else {
                0
            }
        })
        .collect();
    CoincidenceHistogram::new(dist.setting().clone(), n, counts, duration_s, Some(seed))
}

/// Tags chosen for every source in one ensemble member.
#[derive(Debug, Clone, PartialEq)]
pub struct ApparatusMember {
    pub weight: f64,
    pub tags: Vec<SourceTags>,
}

/// Sources, fusion network and detection.
#[derive(Debug, Clone)]
pub struct Apparatus {
    sources: Vec<PdcSource>,
    topology: FusionTopology,
    detector: DetectorModel,
    repetition_rate_hz: f64,
    truncation_pairs: u32,
    analyzers: AnalyzerKind,
}

impl Apparatus {
    /// `truncation_pairs` bounds the total pair number over all sources; each source
    /// is further capped by its own `truncation_pairs`.
    pub fn new(
        sources: Vec<PdcSource>,
        topology: FusionTopology,
        detector: DetectorModel,
        repetition_rate_hz: f64,
        truncation_pairs: u32,
    ) -> Result<Self, ExperimentError> {
        if sources.len() != topology.sources() {
            return Err(ExperimentError::SourceCount {
                expected: topology.sources(),
                found: sources.len(),
            });
        }
        if topology.n_arms() > MAX_ARMS {
            return Err(ExperimentError::TooManyArms(topology.n_arms()));
        }
        for (i, s) in sources.iter().enumerate() {
            let (want_a, want_b) = (e_arm(i + 1).to_string(), o_arm(i + 1).to_string());
            if s.arm_a() != want_a || s.arm_b() != want_b {
                return Err(ExperimentError::SourceArms {
                    index: i + 1,
                    found_a: s.arm_a().into(),
                    found_b: s.arm_b().into(),
                    want_a,
                    want_b,
                });
            }
        }
        if !(repetition_rate_hz >= 0.0 && repetition_rate_hz.is_finite()) {
            return Err(ExperimentError::OutOfRange {
                name: "repetition_rate_hz",
                value: repetition_rate_hz,
            });
        }
        Ok(Self {
            sources,
            topology,
            detector,
            repetition_rate_hz,
            truncation_pairs,
            analyzers: AnalyzerKind::Abstract,
        })
    }

    /// Copies of `template` placed at positions 1..=n on their standard arms.
    pub fn place_sources(template: &PdcSource, n: usize) -> Vec<PdcSource> {
        (1..=n)
            .map(|s| template.placed(s, e_arm(s).to_string(), o_arm(s).to_string()))
            .collect()
    }

    /// Star network, perfect overlaps and detectors, at most one pair per source.
    pub fn ideal(n_sources: usize, p: f64) -> Result<Self, ExperimentError> {
        let template = PdcSource::new(1, "1", "2", p)?;
        Self::new(
            Self::place_sources(&template, n_sources),
            FusionTopology::star(n_sources)?,
            DetectorModel::perfect(),
            1.0,
            n_sources as u32,
        )
    }

    pub fn with_analyzers(mut self, kind: AnalyzerKind) -> Self {
        self.analyzers = kind;
        self
    }

    pub fn with_detector(mut self, detector: DetectorModel) -> Self {
        self.detector = detector;
        self
    }

    pub fn sources(&self) -> &[PdcSource] {
        &self.sources
    }

    pub fn topology(&self) -> &FusionTopology {
        &self.topology
    }

    pub fn detector(&self) -> &DetectorModel {
        &self.detector
    }

    pub fn repetition_rate_hz(&self) -> f64 {
        self.repetition_rate_hz
    }

    pub fn truncation_pairs(&self) -> u32 {
        self.truncation_pairs
    }

    pub fn analyzers(&self) -> AnalyzerKind {
        self.analyzers
    }

    pub fn n_arms(&self) -> usize {
        self.topology.n_arms()
    }

    /// Output arms in pattern order: "1", "2", …
    pub fn arm_labels(&self) -> Vec<String> {
        (1..=self.n_arms()).map(|a| a.to_string()).collect()
    }

    /// Allowed pair-number vectors with their normalized probabilities.
    pub fn emission_patterns(&self) -> Vec<(EmissionPattern, f64)> {
        let mut patterns: Vec<(EmissionPattern, f64)> = Vec::new();
        let mut cur = Vec::new();
        self.collect_patterns(0, self.truncation_pairs, &mut cur, &mut patterns);
        let z: f64 = patterns.iter().map(|(_, w)| w).sum();
        for (_, w) in patterns.iter_mut() {
            *w /= z;
        }
        patterns
    }

    fn collect_patterns(&self, i: usize, budget: u32, cur: &mut Vec<u32>, out: &mut Vec<(EmissionPattern, f64)>) {
        if i == self.sources.len() {
            let w = cur.iter().zip(&self.sources).map(|(&n, s)| s.emission_weight(n)).product();
            out.push((EmissionPattern(cur.clone()), w));
            return;
        }
        for n in 0..=budget.min(self.sources[i].truncation_pairs()) {
            cur.push(n);
            self.collect_patterns(i + 1, budget - n, cur, out);
            cur.pop();
        }
    }

    /// Cartesian product of the per-source ensembles.
    pub fn members(&self) -> Vec<ApparatusMember> {
        let mut out = vec![ApparatusMember {
            weight: 1.0,
            tags: Vec::new(),
        }];
        for s in &self.sources {
            let ms = s.members();
            out = out
                .into_iter()
                .flat_map(|m| {
                    ms.iter().map(move |sm| {
                        let mut tags = m.tags.clone();
                        tags.push(sm.tags.clone());
                        ApparatusMember {
                            weight: m.weight * sm.weight,
                            tags,
                        }
                    })
                })
                .collect();
        }
        out
    }

    /// Arms in pump order (a before b) × {H, V} × every tag of the member, e before o.
    pub fn member_registry(&self, member: &ApparatusMember) -> Result<ModeRegistry, ExperimentError> {
        let arms: Vec<&str> = self.sources.iter().flat_map(|s| [s.arm_a(), s.arm_b()]).collect();
        let mut tags: Vec<&str> = member.tags.iter().flat_map(|t| t.all()).collect();
        tags.sort_by_key(|t| tag_order(t));
        tags.dedup();
        Ok(ModeRegistry::grid(&arms, &tags)?)
    }

    /// Synthesizers of every source, then the fusion PBSs in edge order. Each fusion
    /// PBS is followed by a π phase on V of its first arm, cancelling the two
    /// reflection phases picked up by the all-V branch.
    pub fn network_elements(&self, registry: &ModeRegistry) -> Result<Vec<LinearElement>, ExperimentError> {
        let mut out = Vec::new();
        for s in &self.sources {
            out.extend(s.synthesizer_elements(registry)?);
        }
        out.extend(self.fusion_elements(registry)?);
        Ok(out)
    }

    pub fn fusion_elements(&self, registry: &ModeRegistry) -> Result<Vec<LinearElement>, ExperimentError> {
        let mut out = Vec::new();
        for &(x, y) in self.topology.edges() {
            let (x, y) = (x.to_string(), y.to_string());
            out.push(LinearElement::pbs(&x, &y, &x, &y, registry)?);
            out.push(LinearElement::phase_shift(Polarization::V, PI, &x, registry)?);
        }
        Ok(out)
    }

    /// Normalized state of one emission pattern after the fusion network.
    pub fn propagate_sector(
        &self,
        member: &ApparatusMember,
        registry: Arc<ModeRegistry>,
        pattern: &EmissionPattern,
        elements: &[LinearElement],
    ) -> Result<AmplitudeState, ExperimentError> {
        let trunc = 2 * self.truncation_pairs;
        let mut state = AmplitudeState::vacuum(registry.clone(), trunc);
        for ((s, tags), &n) in self.sources.iter().zip(&member.tags).zip(&pattern.0) {
            let sector = s.pair_sector(tags, registry.clone(), trunc, n)?;
            state = state.disjoint_product(&sector)?;
        }
        Ok(apply_all(&state, elements)?)
    }

    /// Everything up to the analyzers, for all members and emission patterns.
    ///
    /// Without dark counts, patterns with fewer photons than arms and terms leaving an
    /// arm empty can never be accepted, so they are dropped here.
    pub fn prepare(&self) -> Result<PreparedEnsemble, ExperimentError> {
        let arms = self.arm_labels();
        let dark = self.detector.dark_count_probability() > 0.0;
        let patterns = self.emission_patterns();
        let mut members = Vec::new();
        for member in self.members() {
            let registry = Arc::new(self.member_registry(&member)?);
            let fusion = self.fusion_elements(&registry)?;
            let trunc = 2 * self.truncation_pairs;
            // Synthesizer output per source and pair number, shared by all patterns.
            let mut synthesized: Vec<Vec<AmplitudeState>> = Vec::new();
            for (src, tags) in self.sources.iter().zip(&member.tags) {
                let elements = src.synthesizer_elements(&registry)?;
                let mut per_n = Vec::new();
                for n in 0..=self.truncation_pairs.min(src.truncation_pairs()) {
                    per_n.push(apply_all(&src.pair_sector(tags, registry.clone(), trunc, n)?, &elements)?);
                }
                synthesized.push(per_n);
            }
            let arm_of: Vec<Option<usize>> = registry.modes().iter().map(|m| arms.iter().position(|a| *a == m.arm)).collect();
            let mut sectors = Vec::new();
            for (pattern, pw) in &patterns {
                if !dark && (2 * pattern.order() as usize) < arms.len() {
                    continue;
                }
                let mut state = AmplitudeState::vacuum(registry.clone(), trunc);
                for (per_n, &n) in synthesized.iter().zip(&pattern.0) {
                    state = state.disjoint_product(&per_n[n as usize])?;
                }
                let mut state = apply_all(&state, &fusion)?;
                if !dark {
                    state = state.filtered(|occ| {
                        let mut hit = 0u32;
                        for (m, _) in occ.iter() {
                            if let Some(a) = arm_of[m] {
                                hit |= 1 << a;
                            }
                        }
                        hit.count_ones() as usize == arms.len()
                    });
                }
                if !state.is_empty() {
                    sectors.push(PreparedSector {
                        pattern: pattern.clone(),
                        weight: member.weight * pw,
                        state,
                    });
                }
            }
            members.push(PreparedMember { registry, sectors });
        }
        Ok(PreparedEnsemble {
            arms,
            detector: self.detector,
            analyzers: self.analyzers,
            members,
        })
    }

    pub fn outcome_distribution(&self, setting: &MeasurementSetting) -> Result<OutcomeDistribution, ExperimentError> {
        self.prepare()?.distribution(setting)
    }

    pub fn monte_carlo_counts(&self, setting: &MeasurementSetting, duration_s: f64, seed: u64) -> Result<CoincidenceHistogram, ExperimentError> {
        let dist = self.outcome_distribution(setting)?;
        Ok(sample_counts(&dist, self.repetition_rate_hz, duration_s, seed))
    }
}

#[derive(Debug, Clone)]
pub struct PreparedSector {
    pub pattern: EmissionPattern,
    /// Member weight times emission-pattern probability.
    pub weight: f64,
    pub state: AmplitudeState,
}

#[derive(Debug, Clone)]
struct PreparedMember {
    registry: Arc<ModeRegistry>,
    sectors: Vec<PreparedSector>,
}

/// Output of [`Apparatus::prepare`], reusable across measurement settings.
#[derive(Debug, Clone)]
pub struct PreparedEnsemble {
    arms: Vec<String>,
    detector: DetectorModel,
    analyzers: AnalyzerKind,
    members: Vec<PreparedMember>,
}

impl PreparedEnsemble {
    pub fn arms(&self) -> &[String] {
        &self.arms
    }

    pub fn sectors(&self) -> impl Iterator<Item = &PreparedSector> {
        self.members.iter().flat_map(|m| m.sectors.iter())
    }

    pub fn distribution(&self, setting: &MeasurementSetting) -> Result<OutcomeDistribution, ExperimentError> {
        let mut absolute = vec![0.0; 1 << self.arms.len()];
        for member in &self.members {
            if member.sectors.is_empty() {
                continue;
            }
            let per_arm = analyzer_elements_by_arm(setting, &self.arms, self.analyzers, &member.registry)?;
            for sector in &member.sectors {
                accumulate_detection_pairwise(&sector.state, &self.arms, &per_arm, &self.detector, sector.weight, &mut absolute)?;
            }
        }
        Ok(OutcomeDistribution::from_absolute(setting.clone(), self.arms.len(), &absolute))
    }

    /// Per-pattern absolute acceptance probability for one emission pattern, summed
    /// over members.
    pub fn accept_probability_of(&self, pattern: &EmissionPattern, setting: &MeasurementSetting) -> Result<f64, ExperimentError> {
        let mut total = 0.0;
        for member in &self.members {
            let per_arm = analyzer_elements_by_arm(setting, &self.arms, self.analyzers, &member.registry)?;
            for sector in member.sectors.iter().filter(|s| &s.pattern == pattern) {
                let mut absolute = vec![0.0; 1 << self.arms.len()];
                accumulate_detection_pairwise(&sector.state, &self.arms, &per_arm, &self.detector, sector.weight, &mut absolute)?;
                total += absolute.iter().sum::<f64>();
            }
        }
        Ok(total)
    }
}

/// `⟨σx⊗σx⟩` of a lone source's synthesizer output in accepted two-fold coincidences,
/// along with the absolute correlation sum and acceptance probability.
fn synthesizer_correlation(source: &PdcSource, detector: &DetectorModel, truncation_pairs: u32) -> Result<(f64, f64), ExperimentError> {
    let s = source.placed(1, "1", "2").with_truncation_pairs(source.truncation_pairs().min(truncation_pairs))?;
    let app = Apparatus::new(vec![s], FusionTopology::star(1)?, *detector, 1.0, truncation_pairs)?;
    let dist = app.outcome_distribution(&MeasurementSetting::Phase { k: 0 })?;
    let num: f64 = (0..4u32).map(|b| DetectionPattern::new(b, 2)).map(|p| p.parity() * dist.absolute(p)).sum();
    Ok((num, dist.accept_probability()))
}

/// Two-photon visibility in the |±⟩ basis of a single synthesizer, including
/// multi-pair emission and detection.
pub fn synthesizer_visibility(source: &PdcSource, detector: &DetectorModel, truncation_pairs: u32) -> Result<f64, ExperimentError> {
    let (num, den) = synthesizer_correlation(source, detector, truncation_pairs)?;
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// Synthesizer overlap giving `target` visibility, clamped to [0, 1].
pub fn calibrate_synthesizer_overlap(source: &PdcSource, detector: &DetectorModel, truncation_pairs: u32, target: f64) -> Result<f64, ExperimentError> {
    let (n1, d1) = synthesizer_correlation(&source.with_synthesizer_overlap(1.0)?, detector, truncation_pairs)?;
    let (n0, d0) = synthesizer_correlation(&source.with_synthesizer_overlap(0.0)?, detector, truncation_pairs)?;
    // V(γ) = (γ n1 + (1-γ) n0) / (γ d1 + (1-γ) d0), solved for γ.
    let a = n1 - target * d1;
    let b = n0 - target * d0;
    if a == b {
        return Ok(1.0);
    }
    Ok((-b / (a - b)).clamp(0.0, 1.0))
}

/// Absolute rate of odd-parity four-fold coincidences in the |±⟩ basis for two
/// copies of `source` fused on one PBS, with ideal synthesizers.
fn fusion_odd_rate(source: &PdcSource, fusion_overlap: f64, detector: &DetectorModel, truncation_pairs: u32) -> Result<f64, ExperimentError> {
    let s = source
        .with_synthesizer_overlap(1.0)?
        .with_fusion_overlap(fusion_overlap)?
        .with_truncation_pairs(source.truncation_pairs().min(truncation_pairs))?;
    let app = Apparatus::new(Apparatus::place_sources(&s, 2), FusionTopology::star(2)?, *detector, 1.0, truncation_pairs)?;
    let dist = app.outcome_distribution(&MeasurementSetting::Phase { k: 0 })?;
    Ok((0..16u32)
        .map(|b| DetectionPattern::new(b, 4))
        .filter(|p| p.parity() < 0.0)
        .map(|p| dist.absolute(p))
        .sum())
}

/// Dip visibility `1 − N(overlap)/N(0)` of the odd-parity four-fold rate when two
/// copies of `source` are fused, multi-pair emission and detection included.
/// Without multi-pair noise this is the product of the two fusion overlaps.
pub fn fusion_visibility(source: &PdcSource, detector: &DetectorModel, truncation_pairs: u32) -> Result<f64, ExperimentError> {
    let n = fusion_odd_rate(source, source.fusion_overlap(), detector, truncation_pairs)?;
    let n0 = fusion_odd_rate(source, 0.0, detector, truncation_pairs)?;
    Ok(if n0 > 0.0 { 1.0 - n / n0 } else { 0.0 })
}

/// Fusion overlap giving `target` dip visibility, clamped to [0, 1]. The odd rate
/// is `x²·N(1) + (1 − x²)·N(0)` for overlap `x`, so the solution is closed-form.
pub fn calibrate_fusion_overlap(source: &PdcSource, detector: &DetectorModel, truncation_pairs: u32, target: f64) -> Result<f64, ExperimentError> {
    let n1 = fusion_odd_rate(source, 1.0, detector, truncation_pairs)?;
    let n0 = fusion_odd_rate(source, 0.0, detector, truncation_pairs)?;
    if n0 <= 0.0 || n1 >= n0 {
        return Ok(1.0);
    }
    Ok((target.max(0.0) / (1.0 - n1 / n0)).sqrt().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_labels_round_trip() {
        for s in [
            MeasurementSetting::Computational,
            MeasurementSetting::Phase { k: 3 },
            MeasurementSetting::Angles(vec![0.1, 1.0 / 3.0]),
        ] {
            assert_eq!(s.label().parse::<MeasurementSetting>().unwrap(), s);
        }
        assert!("x1".parse::<MeasurementSetting>().is_err());
        assert!(MeasurementSetting::Angles(vec![7.0]).angles(1).is_err());
    }

    #[test]
    fn pattern_rendering() {
        let p = DetectionPattern::new(0b101, 8);
        assert_eq!(p.render(('+', '-')), "-+-+++++");
        assert_eq!(DetectionPattern::parse("-+-+++++", ('+', '-')), Some(p));
        assert_eq!(p.parity(), 1.0);
        assert_eq!(DetectionPattern::parse("HxV", ('H', 'V')), None);
    }

    #[test]
    fn coincidence_filter_cases() {
        let full: Vec<(usize, Detector)> = (1..=8).map(|a| (a, if a == 2 { Detector::Minus } else { Detector::Plus })).collect();
        assert_eq!(coincidence_unit_filter(&full, 8), Some(DetectionPattern::new(0b10, 8)));
        let mut nine = full.clone();
        nine.push((3, Detector::Minus));
        assert_eq!(coincidence_unit_filter(&nine, 8), None);
        assert_eq!(coincidence_unit_filter(&full[..7], 8), None);
    }

    #[test]
    fn detector_fire_probability() {
        let d = DetectorModel::new(0.25, 0.0).unwrap();
        assert_eq!(d.fire(0), 0.0);
        assert!((d.fire(2) - (1.0 - 0.75f64.powi(2))).abs() < 1e-15);
        assert!(DetectorModel::new(1.2, 0.0).is_err());
    }

    #[test]
    fn histogram_text_round_trip() {
        let counts: Vec<u64> = (0..16).map(|i| i * 3).collect();
        let h = CoincidenceHistogram::new(MeasurementSetting::Phase { k: 2 }, 4, counts, 5400.5, Some(99));
        let t = PatternTable::Counts(h.clone());
        assert_eq!(PatternTable::parse(&t.to_text()).unwrap(), t);

        let probs: Vec<f64> = (0..16).map(|i| i as f64 / 120.0).collect();
        let d = OutcomeDistribution::new(MeasurementSetting::Computational, 4, probs, 1.0 / 3.0);
        let t = PatternTable::Exact(d);
        assert_eq!(PatternTable::parse(&t.to_text()).unwrap(), t);
    }

    #[test]
    fn histogram_parse_errors_carry_line() {
        let h = CoincidenceHistogram::empty(MeasurementSetting::Computational, 2);
        let text = h.to_text().replace("VH,0", "VH,x");
        match PatternTable::parse(&text) {
            Err(ExperimentError::Parse { line, .. }) => assert_eq!(line, 3, "HH, VH, HV, VV order"),
            other => panic!("{other:?}"),
        }
        assert!(PatternTable::parse("").is_err());
    }

    #[test]
    fn emission_patterns_normalize() {
        let app = Apparatus::ideal(4, 0.058).unwrap();
        let pats = app.emission_patterns();
        // Per-source cap 1: all 16 subsets.
        assert_eq!(pats.len(), 16);
        assert!((pats.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ideal_bell_pair_distribution() {
        let app = Apparatus::ideal(1, 0.01).unwrap();
        let hv = app.outcome_distribution(&MeasurementSetting::Computational).unwrap();
        assert!((hv.conditional()[0] - 0.5).abs() < 1e-12);
        assert!((hv.conditional()[3] - 0.5).abs() < 1e-12);
        let x = app.outcome_distribution(&MeasurementSetting::Phase { k: 0 }).unwrap();
        assert!((x.conditional()[0] + x.conditional()[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthesizer_calibration_hits_target() {
        let src = PdcSource::new(1, "1", "2", 0.058).unwrap().with_truncation_pairs(3).unwrap();
        let det = DetectorModel::new(0.265, 0.0).unwrap();
        let g = calibrate_synthesizer_overlap(&src, &det, 3, 0.9).unwrap();
        let v = synthesizer_visibility(&src.with_synthesizer_overlap(g).unwrap(), &det, 3).unwrap();
        assert!((v - 0.9).abs() < 1e-10, "{v}");
    }

    #[test]
    fn fusion_calibration_hits_target() {
        let src = PdcSource::new(1, "1", "2", 0.058).unwrap().with_truncation_pairs(3).unwrap();
        let det = DetectorModel::new(0.265, 0.0).unwrap();
        let x = calibrate_fusion_overlap(&src, &det, 3, 0.76).unwrap();
        let v = fusion_visibility(&src.with_fusion_overlap(x).unwrap(), &det, 3).unwrap();
        assert!((v - 0.76).abs() < 1e-10, "{v}");
    }

    #[test]
    fn fusion_visibility_without_noise_is_overlap_product() {
        let src = PdcSource::new(1, "1", "2", 1e-4).unwrap().with_fusion_overlap(0.8).unwrap();
        let v = fusion_visibility(&src, &DetectorModel::perfect(), 2).unwrap();
        assert!((v - 0.64).abs() < 1e-9, "{v}");
    }
}
