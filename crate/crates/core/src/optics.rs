//! Passive linear-optical elements acting on creation operators.
//!
//! An element is a unitary `U` over an ordered subset of modes; a photon in mode
//! `j` is sent to `Σ_k U[k][j] |k⟩`. Polarization optics act identically on every
//! spectral tag registered on their arm.
//!
//! Conventions: a PBS transmits H and reflects V with a factor `i`. Wave plates
//! use the fast-axis Jones matrices below; the quarter-wave plate at 45° turns
//! |H⟩ into (|H⟩ + i|V⟩)/√2 up to a global phase.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{AmplitudeState, FockError, ModeLabel, ModeRegistry, Occupation, Polarization};

/// Tolerance on `max |U†U − I|` for an element to be accepted.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum OpticsError {
    #[error("arm {arm} has no {pol} mode for tag {tag}")]
    MissingMode { arm: String, pol: Polarization, tag: String },
    #[error("arm {0} has no registered modes")]
    UnknownArm(String),
    #[error("arms {0} and {1} carry different spectral tags")]
    TagMismatch(String, String),
    #[error("matrix is {rows}x{cols} for {modes} modes")]
    Shape { rows: usize, cols: usize, modes: usize },
    #[error("matrix is not unitary (residual {0:e})")]
    NotUnitary(f64),
    #[error("beam splitter ports must be two distinct arms in and two distinct arms out")]
    BadPorts,
    #[error(transparent)]
    Fock(#[from] FockError),
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Half-wave plate Jones matrix, fast axis at `theta`: [[cos2θ, sin2θ], [sin2θ, −cos2θ]].
pub fn hwp_jones(theta: f64) -> Matrix2<Complex64> {
    let (s, co) = (2.0 * theta).sin_cos();
    Matrix2::new(c(co, 0.0), c(s, 0.0), c(s, 0.0), c(-co, 0.0))
}

/// Quarter-wave plate Jones matrix, fast axis at `theta`: R(θ)·diag(1, −i)·R(−θ).
pub fn qwp_jones(theta: f64) -> Matrix2<Complex64> {
    let (s, co) = theta.sin_cos();
    let i = c(0.0, 1.0);
    Matrix2::new(
        c(co * co, 0.0) - i * (s * s),
        c(co * s, 0.0) + i * (co * s),
        c(co * s, 0.0) + i * (co * s),
        c(s * s, 0.0) - i * (co * co),
    )
}

/// Rows are ⟨+θ| and ⟨−θ|, the eigenvectors of cosθ·σx + sinθ·σy with eigenvalues ±1.
/// Row 0 feeds detector D+ (the arm's H mode), row 1 feeds D− (the V mode).
pub fn analyzer_jones(theta: f64) -> Matrix2<Complex64> {
    let e = Complex64::from_polar(FRAC_1_SQRT_2, -theta);
    let r = c(FRAC_1_SQRT_2, 0.0);
    Matrix2::new(r, e, r, -e)
}

/// `diag(1, e^{iφ})` on (H, V).
pub fn phase_jones(pol: Polarization, phi: f64) -> Matrix2<Complex64> {
    let p = Complex64::from_polar(1.0, phi);
    let one = c(1.0, 0.0);
    match pol {
        Polarization::H => Matrix2::new(p, c(0.0, 0.0), c(0.0, 0.0), one),
        Polarization::V => Matrix2::new(one, c(0.0, 0.0), c(0.0, 0.0), p),
    }
}

/// Wave-plate angles `(qwp, hwp)` that, followed by a PBS, measure in the basis
/// (|H⟩ ± e^{iθ}|V⟩)/√2: the quarter-wave plate at 45° maps the basis onto linear
/// polarizations at θ/2 + π/4, which the half-wave plate rotates onto H/V.
pub fn analyzer_waveplates(theta: f64) -> (f64, f64) {
    (std::f64::consts::FRAC_PI_4, theta / 4.0 + std::f64::consts::FRAC_PI_8)
}

/// A unitary acting on an ordered set of modes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearElement {
    modes: Vec<ModeLabel>,
    matrix: DMatrix<Complex64>,
}

impl LinearElement {
    pub fn new(modes: Vec<ModeLabel>, matrix: DMatrix<Complex64>) -> Result<Self, OpticsError> {
        if matrix.nrows() != modes.len() || matrix.ncols() != modes.len() {
            return Err(OpticsError::Shape {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
                modes: modes.len(),
            });
        }
        let el = Self { modes, matrix };
        let r = el.unitarity_residual();
        if !(r < UNITARITY_TOLERANCE) {
            return Err(OpticsError::NotUnitary(r));
        }
        Ok(el)
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// `max |U†U − I|`.
    pub fn unitarity_residual(&self) -> f64 {
        let n = self.modes.len();
        let prod = self.matrix.adjoint() * &self.matrix;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((prod[(i, j)] - c(target, 0.0)).norm());
            }
        }
        worst
    }

    /// The same 2×2 polarization unitary on every spectral tag of `arm`.
    pub fn polarization(arm: &str, jones: Matrix2<Complex64>, registry: &ModeRegistry) -> Result<Self, OpticsError> {
        let tags = registry.tags_on_arm(arm);
        if tags.is_empty() {
            return Err(OpticsError::UnknownArm(arm.to_string()));
        }
        let mut modes = Vec::with_capacity(2 * tags.len());
        for tag in &tags {
            for pol in [Polarization::H, Polarization::V] {
                let m = ModeLabel::new(arm, pol, *tag);
                if registry.index_of(&m).is_none() {
                    return Err(OpticsError::MissingMode {
                        arm: arm.to_string(),
                        pol,
                        tag: tag.to_string(),
                    });
                }
                modes.push(m);
            }
        }
        let n = modes.len();
        let mut matrix = DMatrix::zeros(n, n);
        for b in 0..tags.len() {
            for r in 0..2 {
                for col in 0..2 {
                    matrix[(2 * b + r, 2 * b + col)] = jones[(r, col)];
                }
            }
        }
        Self::new(modes, matrix)
    }

    pub fn hwp(theta: f64, arm: &str, registry: &ModeRegistry) -> Result<Self, OpticsError> {
        Self::polarization(arm, hwp_jones(theta), registry)
    }

    pub fn qwp(theta: f64, arm: &str, registry: &ModeRegistry) -> Result<Self, OpticsError> {
        Self::polarization(arm, qwp_jones(theta), registry)
    }

    pub fn phase_shift(pol: Polarization, phi: f64, arm: &str, registry: &ModeRegistry) -> Result<Self, OpticsError> {
        Self::polarization(arm, phase_jones(pol, phi), registry)
    }

    pub fn analyzer_basis(theta: f64, arm: &str, registry: &ModeRegistry) -> Result<Self, OpticsError> {
        Self::polarization(arm, analyzer_jones(theta), registry)
    }

    /// Polarizing beam splitter. H from `in1` exits `out1`, H from `in2` exits `out2`;
    /// V from `in1` exits `out2` and V from `in2` exits `out1`, each with factor `i`.
    ///
    /// When the output arms are the input arms (in either order) the element acts in
    /// place on four modes per tag. Otherwise it spans in ∪ out and sends the
    /// (normally empty) output modes back to the inputs so the whole map stays unitary.
    pub fn pbs(in1: &str, in2: &str, out1: &str, out2: &str, registry: &ModeRegistry) -> Result<Self, OpticsError> {
        if in1 == in2 || out1 == out2 {
            return Err(OpticsError::BadPorts);
        }
        let tags: Vec<String> = registry.tags_on_arm(in1).iter().map(|s| s.to_string()).collect();
        for arm in [in1, in2, out1, out2] {
            let t: Vec<String> = registry.tags_on_arm(arm).iter().map(|s| s.to_string()).collect();
            if t.is_empty() {
                return Err(OpticsError::UnknownArm(arm.to_string()));
            }
            let mut a = t.clone();
            let mut b = tags.clone();
            a.sort();
            b.sort();
            if a != b {
                return Err(OpticsError::TagMismatch(in1.to_string(), arm.to_string()));
            }
        }
        let same = [in1, in2].contains(&out1) && [in1, in2].contains(&out2);
        let disjoint = ![in1, in2].contains(&out1) && ![in1, in2].contains(&out2);
        if !same && !disjoint {
            return Err(OpticsError::BadPorts);
        }
        let mut arms = vec![in1, in2];
        if disjoint {
            arms.extend([out1, out2]);
        }
        let mut modes = Vec::new();
        for tag in &tags {
            for arm in &arms {
                for pol in [Polarization::H, Polarization::V] {
                    let m = ModeLabel::new(*arm, pol, tag.as_str());
                    registry.require(&m)?;
                    modes.push(m);
                }
            }
        }
        let n = modes.len();
        let pos = |arm: &str, pol: Polarization, tag: &str| {
            modes
                .iter()
                .position(|m| m.arm == arm && m.pol == pol && m.tag == tag)
                .expect("mode listed above")
        };
        let i = c(0.0, 1.0);
        let mut matrix = DMatrix::zeros(n, n);
        for tag in &tags {
            let routes = [
                (in1, Polarization::H, out1, c(1.0, 0.0)),
                (in2, Polarization::H, out2, c(1.0, 0.0)),
                (in1, Polarization::V, out2, i),
                (in2, Polarization::V, out1, i),
            ];
            for (from, pol, to, amp) in routes {
                matrix[(pos(to, pol, tag), pos(from, pol, tag))] = amp;
            }
            if disjoint {
                // Inverse routes from the outputs back to the inputs.
                for (from, pol, to, amp) in routes {
                    matrix[(pos(from, pol, tag), pos(to, pol, tag))] = amp.conj();
                }
            }
        }
        Self::new(modes, matrix)
    }

    /// Identity on every mode of `arm`.
    pub fn identity(arm: &str, registry: &ModeRegistry) -> Result<Self, OpticsError> {
        Self::polarization(arm, Matrix2::identity(), registry)
    }

    /// Per-mode output columns in registry indices, skipping exact zeros.
    fn columns(&self, registry: &ModeRegistry) -> Result<Vec<(usize, Vec<(u16, Complex64)>)>, OpticsError> {
        let idx: Vec<usize> = self
            .modes
            .iter()
            .map(|m| registry.require(m))
            .collect::<Result<_, _>>()?;
        let mut cols = Vec::with_capacity(idx.len());
        for (j, &gj) in idx.iter().enumerate() {
            let col: Vec<(u16, Complex64)> = idx
                .iter()
                .enumerate()
                .filter(|(k, _)| self.matrix[(*k, j)] != Complex64::new(0.0, 0.0))
                .map(|(k, &gk)| (gk as u16, self.matrix[(k, j)]))
                .collect();
            cols.push((gj, col));
        }
        cols.sort_by_key(|(g, _)| *g);
        Ok(cols)
    }
}

/// Rewrite every creation operator on the element's modes as `Σ_k U[k][j] b†_k`
/// and re-expand the state. Photon number is preserved.
pub fn apply_element(state: &AmplitudeState, element: &LinearElement) -> Result<AmplitudeState, OpticsError> {
    let registry = state.registry().clone();
    let cols = element.columns(&registry)?;
    let col_of = |m: u16| cols.binary_search_by_key(&(m as usize), |(g, _)| *g).ok();

    // Expansions keyed by the sub-occupation on the element's modes.
    let mut cache: BTreeMap<Occupation, Vec<(Occupation, Complex64)>> = BTreeMap::new();
    let mut out: BTreeMap<Occupation, Complex64> = BTreeMap::new();

    for (occ, amp) in state.terms() {
        let mut inside = smallvec::SmallVec::<[(u16, u8); 12]>::new();
        let mut outside = smallvec::SmallVec::<[(u16, u8); 12]>::new();
        for &(m, n) in occ.raw() {
            if col_of(m).is_some() {
                inside.push((m, n));
            } else {
                outside.push((m, n));
            }
        }
        let outside = Occupation::from_sorted_raw(outside);
        if inside.is_empty() {
            *out.entry(outside).or_default() += amp;
            continue;
        }
        let key = Occupation::from_sorted_raw(inside);
        let expansion = cache.entry(key.clone()).or_insert_with(|| {
            let mut partial: BTreeMap<Occupation, Complex64> = BTreeMap::new();
            partial.insert(Occupation::vacuum(), Complex64::new(1.0, 0.0));
            let mut norm = 1.0f64;
            for &(m, n) in key.raw() {
                let (_, col) = &cols[col_of(m).expect("inside mode")];
                for k in 0..n {
                    norm *= (k as f64 + 1.0).sqrt();
                    let mut next: BTreeMap<Occupation, Complex64> = BTreeMap::new();
                    for (po, pa) in &partial {
                        for &(target, u) in col {
                            let existing = po.count(target as usize) as f64;
                            let coeff = pa * u * (existing + 1.0).sqrt();
                            *next.entry(po.with_added(target as usize)).or_default() += coeff;
                        }
                    }
                    partial = next;
                }
            }
            partial
                .into_iter()
                .map(|(o, a)| (o, a / norm))
                .filter(|(_, a)| a.norm() > 0.0)
                .collect()
        });
        for (sub, coeff) in expansion.iter() {
            *out.entry(outside.merged(sub)).or_default() += amp * coeff;
        }
    }
    Ok(AmplitudeState::from_map(
        registry,
        state.truncation(),
        state.prune_epsilon(),
        out,
    ))
}

/// Apply a sequence of elements left to right.
pub fn apply_all(state: &AmplitudeState, elements: &[LinearElement]) -> Result<AmplitudeState, OpticsError> {
    let mut s = state.clone();
    for e in elements {
        s = apply_element(&s, e)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};
    use std::sync::Arc;

    fn one() -> Complex64 {
        c(1.0, 0.0)
    }

    fn arm_registry(arms: &[&str]) -> Arc<ModeRegistry> {
        Arc::new(ModeRegistry::grid(arms, &["e"]).unwrap())
    }

    fn photon(reg: &Arc<ModeRegistry>, arm: &str, h: Complex64, v: Complex64) -> AmplitudeState {
        let vac = AmplitudeState::vacuum(reg.clone(), 4);
        let hs = vac.apply_creation(&ModeLabel::new(arm, Polarization::H, "e"), h).unwrap();
        let vs = vac.apply_creation(&ModeLabel::new(arm, Polarization::V, "e"), v).unwrap();
        hs.added(&vs).unwrap()
    }

    fn amp(s: &AmplitudeState, arm: &str, pol: Polarization) -> Complex64 {
        let reg = s.registry();
        let i = reg.index_of(&ModeLabel::new(arm, pol, "e")).unwrap();
        let mut counts = vec![0; reg.len()];
        counts[i] = 1;
        s.amplitude_of(&counts)
    }

    #[test]
    fn hwp_quarter_turn_swaps_h_and_v() {
        let r = arm_registry(&["a"]);
        let h = photon(&r, "a", one(), c(0.0, 0.0));
        let out = apply_element(&h, &LinearElement::hwp(FRAC_PI_4, "a", &r).unwrap()).unwrap();
        assert!((amp(&out, "a", Polarization::V) - one()).norm() < 1e-15);
        assert!(amp(&out, "a", Polarization::H).norm() < 1e-15);
    }

    #[test]
    fn hwp_zero_is_h_identity_with_v_sign() {
        let r = arm_registry(&["a"]);
        let el = LinearElement::hwp(0.0, "a", &r).unwrap();
        let h = apply_element(&photon(&r, "a", one(), c(0.0, 0.0)), &el).unwrap();
        assert!((amp(&h, "a", Polarization::H) - one()).norm() < 1e-15);
        let v = apply_element(&photon(&r, "a", c(0.0, 0.0), one()), &el).unwrap();
        assert!((amp(&v, "a", Polarization::V) + one()).norm() < 1e-15);
    }

    #[test]
    fn hwp_eighth_turn_makes_diagonal() {
        let r = arm_registry(&["a"]);
        let out = apply_element(
            &photon(&r, "a", one(), c(0.0, 0.0)),
            &LinearElement::hwp(FRAC_PI_8, "a", &r).unwrap(),
        )
        .unwrap();
        assert!((amp(&out, "a", Polarization::H).re - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((amp(&out, "a", Polarization::V).re - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn qwp_axes() {
        let r = arm_registry(&["a"]);
        let h = photon(&r, "a", one(), c(0.0, 0.0));
        let out = apply_element(&h, &LinearElement::qwp(0.0, "a", &r).unwrap()).unwrap();
        assert!((amp(&out, "a", Polarization::H).norm() - 1.0).abs() < 1e-15);

        let out = apply_element(&h, &LinearElement::qwp(FRAC_PI_4, "a", &r).unwrap()).unwrap();
        let (ah, av) = (amp(&out, "a", Polarization::H), amp(&out, "a", Polarization::V));
        // Circular: equal weights and V leading H by +i.
        assert!((ah.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((av / ah - c(0.0, 1.0)).norm() < 1e-14);
    }

    #[test]
    fn waveplates_are_unitary_for_many_angles() {
        let r = arm_registry(&["a"]);
        for i in 0..100 {
            let theta = (i as f64) * 0.0731 - 2.0;
            for el in [
                LinearElement::qwp(theta, "a", &r).unwrap(),
                LinearElement::hwp(theta, "a", &r).unwrap(),
                LinearElement::analyzer_basis(theta, "a", &r).unwrap(),
            ] {
                assert!(el.unitarity_residual() < 1e-12);
            }
        }
    }

    #[test]
    fn pbs_routes_by_polarization() {
        let r = arm_registry(&["1", "2"]);
        let el = LinearElement::pbs("1", "2", "1", "2", &r).unwrap();
        let h = apply_element(&photon(&r, "1", one(), c(0.0, 0.0)), &el).unwrap();
        assert!((amp(&h, "1", Polarization::H) - one()).norm() < 1e-15);
        let v = apply_element(&photon(&r, "1", c(0.0, 0.0), one()), &el).unwrap();
        assert!((amp(&v, "2", Polarization::V) - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pbs_splits_hv_pair_from_one_input() {
        let r = arm_registry(&["1", "2"]);
        let vac = AmplitudeState::vacuum(r.clone(), 4);
        let hv = vac
            .apply_creation(&ModeLabel::new("1", Polarization::H, "e"), one())
            .unwrap()
            .apply_creation(&ModeLabel::new("1", Polarization::V, "e"), one())
            .unwrap();
        let out = apply_element(&hv, &LinearElement::pbs("1", "2", "1", "2", &r).unwrap()).unwrap();
        assert_eq!(out.len(), 1);
        let (occ, a) = out.terms().next().unwrap();
        let labels: Vec<String> = occ.iter().map(|(m, _)| r.label(m).to_string()).collect();
        assert_eq!(labels, vec!["1:H:e", "2:V:e"]);
        assert!((a - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pbs_with_separate_output_arms() {
        let r = arm_registry(&["1", "2", "3", "4"]);
        let el = LinearElement::pbs("1", "2", "3", "4", &r).unwrap();
        assert!(el.unitarity_residual() < 1e-12);
        let v = apply_element(&photon(&r, "2", c(0.0, 0.0), one()), &el).unwrap();
        assert!((amp(&v, "3", Polarization::V) - c(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn pbs_rejects_bad_ports() {
        let r = arm_registry(&["1", "2", "3"]);
        assert_eq!(
            LinearElement::pbs("1", "1", "2", "3", &r),
            Err(OpticsError::BadPorts)
        );
        assert_eq!(
            LinearElement::pbs("1", "2", "1", "3", &r),
            Err(OpticsError::BadPorts)
        );
        assert!(matches!(
            LinearElement::pbs("1", "9", "1", "9", &r),
            Err(OpticsError::UnknownArm(_))
        ));
    }

    #[test]
    fn missing_polarization_mode_is_an_error() {
        let r = ModeRegistry::new(vec![ModeLabel::new("a", Polarization::H, "e")]).unwrap();
        assert!(matches!(
            LinearElement::hwp(0.3, "a", &r),
            Err(OpticsError::MissingMode { .. })
        ));
    }

    #[test]
    fn non_unitary_matrix_rejected() {
        let r = arm_registry(&["a"]);
        let modes = r.modes().to_vec();
        let m = DMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(LinearElement::new(modes, m), Err(OpticsError::NotUnitary(_))));
    }

    #[test]
    fn hwp_twice_is_identity() {
        let r = arm_registry(&["a"]);
        let s = photon(&r, "a", c(0.6, 0.0), c(0.0, 0.8));
        let el = LinearElement::hwp(FRAC_PI_4, "a", &r).unwrap();
        let back = apply_all(&s, &[el.clone(), el]).unwrap();
        assert!((back.inner_product(&s).unwrap().norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn identity_element_leaves_state() {
        let r = arm_registry(&["a"]);
        let s = photon(&r, "a", c(0.6, 0.0), c(0.0, 0.8));
        let out = apply_element(&s, &LinearElement::identity("a", &r).unwrap()).unwrap();
        assert_eq!(out.to_text(), s.to_text());
    }

    /// Balanced beam splitter on H modes of two arms: |1,1⟩ has no coincidence amplitude.
    #[test]
    fn hong_ou_mandel_cancellation() {
        let r = Arc::new(
            ModeRegistry::new(vec![
                ModeLabel::new("a", Polarization::H, "e"),
                ModeLabel::new("b", Polarization::H, "e"),
            ])
            .unwrap(),
        );
        let s = FRAC_1_SQRT_2;
        let bs = LinearElement::new(
            r.modes().to_vec(),
            DMatrix::from_row_slice(2, 2, &[c(s, 0.0), c(0.0, s), c(0.0, s), c(s, 0.0)]),
        )
        .unwrap();
        let input = AmplitudeState::vacuum(r.clone(), 2)
            .apply_creation_at(0, one())
            .apply_creation_at(1, one());
        let out = apply_element(&input, &bs).unwrap();
        assert!(out.amplitude_of(&[1, 1]).norm() < 1e-15);
        assert!((out.amplitude_of(&[2, 0]).norm_sqr() - 0.5).abs() < 1e-14);
        assert!((out.amplitude_of(&[0, 2]).norm_sqr() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn analyzer_eigenstates() {
        let r = arm_registry(&["a"]);
        let prob_plus = |s: &AmplitudeState, theta: f64| {
            let out = apply_element(s, &LinearElement::analyzer_basis(theta, "a", &r).unwrap()).unwrap();
            amp(&out, "a", Polarization::H).norm_sqr()
        };
        let plus = photon(&r, "a", c(FRAC_1_SQRT_2, 0.0), c(FRAC_1_SQRT_2, 0.0));
        assert!((prob_plus(&plus, 0.0) - 1.0).abs() < 1e-15);
        let h = photon(&r, "a", one(), c(0.0, 0.0));
        assert!((prob_plus(&h, 0.0) - 0.5).abs() < 1e-15);
        let tilted = photon(
            &r,
            "a",
            c(FRAC_1_SQRT_2, 0.0),
            Complex64::from_polar(FRAC_1_SQRT_2, FRAC_PI_8),
        );
        assert!((prob_plus(&tilted, FRAC_PI_8) - 1.0).abs() < 1e-15);
    }

    /// QWP(45°), HWP(θ/4 + π/8) and a PBS measure the same basis as the abstract analyzer.
    #[test]
    fn waveplate_analyzer_matches_abstract_basis() {
        for k in 0..16 {
            let theta = k as f64 * PI / 8.0;
            let (q, h) = analyzer_waveplates(theta);
            let composite = hwp_jones(h) * qwp_jones(q);
            let target = analyzer_jones(theta);
            // Rows may differ by a phase only.
            for row in 0..2 {
                let overlap = (0..2)
                    .map(|col| composite[(row, col)] * target[(row, col)].conj())
                    .sum::<Complex64>();
                assert!((overlap.norm() - 1.0).abs() < 1e-12, "theta {theta} row {row}");
            }
        }
    }
}
