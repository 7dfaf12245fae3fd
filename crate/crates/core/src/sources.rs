//! Type-II down-conversion sources and the interferometric Bell-state synthesizer.
//!
//! A source emits `Σ_n c_n (A + B)^n |0⟩` with
//! `A = a†(H, e) b†(V, o)` and `B = a†(V, o') b†(H, e')`, where `c_n = (p/2)^{n/2} / n!`.
//! With this weighting the n-pair sector carries probability `(n+1)(p/2)^n`
//! before normalization, so a single pair is emitted with probability `p`.
//!
//! Spectral distinguishability is a scalar overlap realized as an ensemble: each
//! source independently draws a coherent member (shared tags) or an incoherent one
//! (private tags), see [`PdcSource::members`].

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{AmplitudeState, FockError, ModeLabel, ModeRegistry, Polarization};
use crate::optics::{apply_all, apply_element, LinearElement, OpticsError};

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("{name} = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("truncation_pairs must be at least 1")]
    ZeroTruncation,
    #[error("{pairs} pairs need {needed} photons but the state truncates at {truncation}")]
    TruncationExceeded { pairs: u32, needed: u32, truncation: u32 },
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// Spectral tags used by one ensemble member of a source.
///
/// `e`/`o` label the photons created by `A`, `e_late`/`o_late` those created by `B`
/// (the reflected path of the synthesizer). Equal tags interfere; different tags don't.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceTags {
    pub e: String,
    pub o: String,
    pub e_late: String,
    pub o_late: String,
}

impl SourceTags {
    pub fn coherent() -> Self {
        Self {
            e: "e".into(),
            o: "o".into(),
            e_late: "e".into(),
            o_late: "o".into(),
        }
    }

    pub fn all(&self) -> [&str; 4] {
        [&self.e, &self.o, &self.e_late, &self.o_late]
    }
}

/// Sort key putting e-type tags before o-type tags.
pub fn tag_order(tag: &str) -> (u8, &str) {
    (if tag.starts_with('e') { 0 } else { 1 }, tag)
}

/// One ensemble member of a source with its probability weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceMember {
    pub weight: f64,
    pub tags: SourceTags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdcSource {
    index: usize,
    arm_a: String,
    arm_b: String,
    pair_probability: f64,
    synthesizer_overlap: f64,
    fusion_overlap: f64,
    eo_overlap: f64,
    truncation_pairs: u32,
}

fn unit_interval(name: &'static str, value: f64) -> Result<f64, SourceError> {
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(SourceError::OutOfRange { name, value })
    }
}

impl PdcSource {
    /// A source with perfect overlaps. `index` is the position in pump order (from 1);
    /// after synthesis the e photon leaves on `arm_a` and the o photon on `arm_b`.
    pub fn new(index: usize, arm_a: impl Into<String>, arm_b: impl Into<String>, pair_probability: f64) -> Result<Self, SourceError> {
        Ok(Self {
            index,
            arm_a: arm_a.into(),
            arm_b: arm_b.into(),
            pair_probability: unit_interval("pair_probability", pair_probability)?,
            synthesizer_overlap: 1.0,
            fusion_overlap: 1.0,
            eo_overlap: 0.0,
            truncation_pairs: 1,
        })
    }

    /// The same source parameters at another pump position and pair of arms.
    pub fn placed(&self, index: usize, arm_a: impl Into<String>, arm_b: impl Into<String>) -> Self {
        Self {
            index,
            arm_a: arm_a.into(),
            arm_b: arm_b.into(),
            ..self.clone()
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn arm_a(&self) -> &str {
        &self.arm_a
    }

    pub fn arm_b(&self) -> &str {
        &self.arm_b
    }

    pub fn pair_probability(&self) -> f64 {
        self.pair_probability
    }

    /// √p.
    pub fn pair_amplitude(&self) -> f64 {
        self.pair_probability.sqrt()
    }

    pub fn synthesizer_overlap(&self) -> f64 {
        self.synthesizer_overlap
    }

    pub fn fusion_overlap(&self) -> f64 {
        self.fusion_overlap
    }

    pub fn eo_overlap(&self) -> f64 {
        self.eo_overlap
    }

    pub fn truncation_pairs(&self) -> u32 {
        self.truncation_pairs
    }

    /// Set one overlap for both the synthesizer paths and fusion with other sources.
    pub fn set_pair_distinguishability(&self, overlap: f64) -> Result<Self, SourceError> {
        let o = unit_interval("overlap", overlap)?;
        Ok(Self {
            synthesizer_overlap: o,
            fusion_overlap: o,
            ..self.clone()
        })
    }

    /// Coherence between the transmitted and reflected synthesizer paths.
    pub fn with_synthesizer_overlap(&self, overlap: f64) -> Result<Self, SourceError> {
        Ok(Self {
            synthesizer_overlap: unit_interval("synthesizer_overlap", overlap)?,
            ..self.clone()
        })
    }

    /// Overlap of this source's e photon with the shared fusion mode. Two sources
    /// with overlaps `x` and `y` interfere with visibility `x·y`.
    pub fn with_fusion_overlap(&self, overlap: f64) -> Result<Self, SourceError> {
        Ok(Self {
            fusion_overlap: unit_interval("fusion_overlap", overlap)?,
            ..self.clone()
        })
    }

    /// Overlap between the e and o spectral envelopes (only matters where an o photon
    /// meets an e photon on a beam splitter).
    pub fn with_eo_overlap(&self, overlap: f64) -> Result<Self, SourceError> {
        Ok(Self {
            eo_overlap: unit_interval("eo_overlap", overlap)?,
            ..self.clone()
        })
    }

    pub fn with_pair_probability(&self, p: f64) -> Result<Self, SourceError> {
        Ok(Self {
            pair_probability: unit_interval("pair_probability", p)?,
            ..self.clone()
        })
    }

    pub fn with_truncation_pairs(&self, pairs: u32) -> Result<Self, SourceError> {
        if pairs == 0 {
            return Err(SourceError::ZeroTruncation);
        }
        Ok(Self {
            truncation_pairs: pairs,
            ..self.clone()
        })
    }

    /// Unnormalized probability weight of the n-pair sector: `(n+1)(p/2)^n`.
    pub fn emission_weight(&self, n: u32) -> f64 {
        (n as f64 + 1.0) * (self.pair_probability / 2.0).powi(n as i32)
    }

    /// Probability of emitting `n` pairs within this source's own truncation.
    pub fn emission_probability(&self, n: u32) -> f64 {
        if n > self.truncation_pairs {
            return 0.0;
        }
        let z: f64 = (0..=self.truncation_pairs).map(|k| self.emission_weight(k)).sum();
        self.emission_weight(n) / z
    }

    /// Ensemble members with non-zero weight; weights sum to one.
    pub fn members(&self) -> Vec<SourceMember> {
        let idx = self.index;
        let mut out = Vec::new();
        for synth in [true, false] {
            for fusion in [true, false] {
                for eo in [true, false] {
                    let w = pick(self.synthesizer_overlap, synth) * pick(self.fusion_overlap, fusion) * pick(self.eo_overlap, eo);
                    if w == 0.0 {
                        continue;
                    }
                    let e = if fusion { "e".to_string() } else { format!("e{idx}") };
                    let o = if eo {
                        e.clone()
                    } else if fusion {
                        "o".to_string()
                    } else {
                        format!("o{idx}")
                    };
                    let (e_late, o_late) = if synth {
                        (e.clone(), o.clone())
                    } else {
                        (format!("{e}'{idx}"), format!("{o}'{idx}"))
                    };
                    out.push(SourceMember {
                        weight: w,
                        tags: SourceTags { e, o, e_late, o_late },
                    });
                }
            }
        }
        out
    }

    /// Registry for this source alone: both arms × {H, V} × the given tags.
    pub fn registry_for(&self, tags: &SourceTags) -> Result<ModeRegistry, SourceError> {
        let mut t: Vec<&str> = tags.all().to_vec();
        t.sort_by_key(|x| tag_order(x));
        t.dedup();
        Ok(ModeRegistry::grid(&[self.arm_a.as_str(), self.arm_b.as_str()], &t)?)
    }

    fn pair_operator(&self, state: &AmplitudeState, tags: &SourceTags) -> Result<AmplitudeState, SourceError> {
        let one = Complex64::new(1.0, 0.0);
        let a = state
            .apply_creation(&ModeLabel::new(&self.arm_a, Polarization::H, &tags.e), one)?
            .apply_creation(&ModeLabel::new(&self.arm_b, Polarization::V, &tags.o), one)?;
        let b = state
            .apply_creation(&ModeLabel::new(&self.arm_a, Polarization::V, &tags.o_late), one)?
            .apply_creation(&ModeLabel::new(&self.arm_b, Polarization::H, &tags.e_late), one)?;
        Ok(a.added(&b)?)
    }

    /// Normalized n-pair sector `(A + B)^n |0⟩` in `registry`.
    pub fn pair_sector(&self, tags: &SourceTags, registry: Arc<ModeRegistry>, truncation: u32, n: u32) -> Result<AmplitudeState, SourceError> {
        if 2 * n > truncation {
            return Err(SourceError::TruncationExceeded {
                pairs: n,
                needed: 2 * n,
                truncation,
            });
        }
        let mut s = AmplitudeState::vacuum(registry, truncation);
        for _ in 0..n {
            s = self.pair_operator(&s, tags)?;
        }
        Ok(s.normalized().expect("pair sector is never empty"))
    }

    /// The truncated, normalized emission state in `registry`.
    pub fn emit_into(&self, tags: &SourceTags, registry: Arc<ModeRegistry>, truncation: u32) -> Result<AmplitudeState, SourceError> {
        let needed = 2 * self.truncation_pairs;
        if needed > truncation {
            return Err(SourceError::TruncationExceeded {
                pairs: self.truncation_pairs,
                needed,
                truncation,
            });
        }
        let amp = (self.pair_probability / 2.0).sqrt();
        let mut power = AmplitudeState::vacuum(registry, truncation);
        let mut total = power.clone();
        let mut factorial = 1.0;
        for n in 1..=self.truncation_pairs {
            power = self.pair_operator(&power, tags)?;
            factorial *= n as f64;
            let c = amp.powi(n as i32) / factorial;
            total = total.added(&power.scaled(Complex64::new(c, 0.0)))?;
        }
        Ok(total.normalized().expect("vacuum term keeps the state non-zero"))
    }

    /// Emission of the fully coherent member on this source's own 8-mode registry.
    pub fn emit(&self) -> Result<AmplitudeState, SourceError> {
        let tags = SourceTags::coherent();
        let reg = Arc::new(self.registry_for(&tags)?);
        self.emit_into(&tags, reg, 2 * self.truncation_pairs)
    }

    /// HWP(π/4) on arm b, PBS between the arms, and a π phase on V of arm a so the
    /// post-selected pair is (|HH⟩ + |VV⟩)/√2 with the e photon on arm a.
    pub fn synthesizer_elements(&self, registry: &ModeRegistry) -> Result<Vec<LinearElement>, SourceError> {
        Ok(vec![
            LinearElement::hwp(FRAC_PI_4, &self.arm_b, registry)?,
            LinearElement::pbs(&self.arm_a, &self.arm_b, &self.arm_a, &self.arm_b, registry)?,
            LinearElement::phase_shift(Polarization::V, PI, &self.arm_a, registry)?,
        ])
    }
}

fn pick(overlap: f64, coherent: bool) -> f64 {
    if coherent {
        overlap
    } else {
        1.0 - overlap
    }
}

#[derive(Debug, Clone)]
pub struct SynthesizerOutput {
    /// Coherent-member output over the two synthesizer arms.
    pub state: AmplitudeState,
    /// Fidelity with (|HH⟩ + |VV⟩)/√2 given one photon per output arm,
    /// averaged over the distinguishability ensemble.
    pub heralded_fidelity: f64,
}

/// Run the emission of `source` through its synthesizer.
pub fn bell_synthesizer(source: &PdcSource) -> Result<SynthesizerOutput, SourceError> {
    let tags = SourceTags::coherent();
    let reg = Arc::new(source.registry_for(&tags)?);
    let trunc = 2 * source.truncation_pairs;
    let state = apply_all(
        &source.emit_into(&tags, reg.clone(), trunc)?,
        &source.synthesizer_elements(&reg)?,
    )?;

    let mut num = 0.0;
    let mut den = 0.0;
    for member in source.members() {
        let reg = Arc::new(source.registry_for(&member.tags)?);
        let out = apply_all(
            &source.emit_into(&member.tags, reg.clone(), trunc)?,
            &source.synthesizer_elements(&reg)?,
        )?;
        let (f, p) = phi_plus_overlap(&out, source.arm_a(), source.arm_b());
        num += member.weight * f * p;
        den += member.weight * p;
    }
    Ok(SynthesizerOutput {
        state,
        heralded_fidelity: if den > 0.0 { num / den } else { 0.0 },
    })
}

/// `(fidelity, probability)` of the one-photon-per-arm sector with respect to
/// (|HH⟩ + |VV⟩)/√2, tracing over spectral tags.
pub fn phi_plus_overlap(state: &AmplitudeState, arm_1: &str, arm_2: &str) -> (f64, f64) {
    let reg = state.registry();
    let mut prob = 0.0;
    for (occ, amp) in state.terms() {
        let mut n1 = 0;
        let mut n2 = 0;
        for (m, c) in occ.iter() {
            let arm = &reg.label(m).arm;
            if arm == arm_1 {
                n1 += c;
            } else if arm == arm_2 {
                n2 += c;
            }
        }
        if n1 == 1 && n2 == 1 && occ.total() == 2 {
            prob += amp.norm_sqr();
        }
    }
    if prob == 0.0 {
        return (0.0, 0.0);
    }
    let mut fid = 0.0;
    for t1 in reg.tags_on_arm(arm_1) {
        for t2 in reg.tags_on_arm(arm_2) {
            let pair = |pol: Polarization| {
                let i = reg.index_of(&ModeLabel::new(arm_1, pol, t1));
                let j = reg.index_of(&ModeLabel::new(arm_2, pol, t2));
                match (i, j) {
                    (Some(i), Some(j)) => {
                        let mut counts = vec![0; reg.len()];
                        counts[i] += 1;
                        counts[j] += 1;
                        state.amplitude_of(&counts)
                    }
                    _ => Complex64::new(0.0, 0.0),
                }
            };
            fid += ((pair(Polarization::H) + pair(Polarization::V)) * FRAC_1_SQRT_2).norm_sqr();
        }
    }
    (fid / prob, prob)
}

/// Two-photon interference visibility of the e photons of `a` and `b` on a fusion PBS:
/// ⟨σx⊗σx⟩ after the PBS for |+⟩|+⟩ inputs, given one photon per output.
pub fn hom_visibility(a: &PdcSource, b: &PdcSource) -> Result<f64, SourceError> {
    let (arm1, arm2) = (a.arm_a(), b.arm_a());
    let fusion_tags = |s: &PdcSource| -> Vec<(f64, String)> {
        [(s.fusion_overlap, "e".to_string()), (1.0 - s.fusion_overlap, format!("e{}", s.index))]
            .into_iter()
            .filter(|(w, _)| *w > 0.0)
            .collect()
    };
    let half = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let mut vis = 0.0;
    for (wa, ta) in fusion_tags(a) {
        for (wb, tb) in fusion_tags(b) {
            let mut tags = vec![ta.as_str(), tb.as_str()];
            tags.sort_by_key(|x| tag_order(x));
            tags.dedup();
            let reg = Arc::new(ModeRegistry::grid(&[arm1, arm2], &tags)?);
            let vac = AmplitudeState::vacuum(reg.clone(), 2);
            let plus = |s: &AmplitudeState, arm: &str, tag: &str| -> Result<AmplitudeState, SourceError> {
                let h = s.apply_creation(&ModeLabel::new(arm, Polarization::H, tag), half)?;
                let v = s.apply_creation(&ModeLabel::new(arm, Polarization::V, tag), half)?;
                Ok(h.added(&v)?)
            };
            let input = plus(&plus(&vac, arm1, &ta)?, arm2, &tb)?;
            let mut s = apply_element(&input, &LinearElement::pbs(arm1, arm2, arm1, arm2, &reg)?)?;
            s = apply_element(&s, &LinearElement::phase_shift(Polarization::V, PI, arm1, &reg)?)?;
            s = apply_element(&s, &LinearElement::analyzer_basis(0.0, arm1, &reg)?)?;
            s = apply_element(&s, &LinearElement::analyzer_basis(0.0, arm2, &reg)?)?;
            let mut num = 0.0;
            let mut den = 0.0;
            for (occ, amp) in s.terms() {
                let mut per_arm = [(0u32, 0u32); 2];
                for (m, c) in occ.iter() {
                    let l = reg.label(m);
                    let k = usize::from(l.arm != arm1);
                    match l.pol {
                        Polarization::H => per_arm[k].0 += c,
                        Polarization::V => per_arm[k].1 += c,
                    }
                }
                if per_arm.iter().all(|&(p, m)| p + m == 1) {
                    let sign = if (per_arm[0].1 + per_arm[1].1) % 2 == 0 { 1.0 } else { -1.0 };
                    num += sign * amp.norm_sqr();
                    den += amp.norm_sqr();
                }
            }
            vis += wa * wb * num / den;
        }
    }
    Ok(vis)
}
