//! Sparse bosonic Fock-space states.
//!
//! A state is a map from occupation vectors to complex amplitudes over a fixed
//! [`ModeRegistry`]. Occupations are stored sparsely (only occupied modes), which
//! keeps keys short even when the registry carries hundreds of spectral-tag modes.
//! Terms live in a `BTreeMap` so that every iteration, and therefore every
//! floating-point accumulation, happens in the same order on every run.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use smallvec::SmallVec;
use thiserror::Error;

/// Amplitudes with magnitude below this are dropped after every operation.
pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("mode {0} is registered twice")]
    DuplicateMode(ModeLabel),
    #[error("mode {0} is not registered")]
    UnregisteredMode(ModeLabel),
    #[error("states are defined over different mode registries")]
    RegistryMismatch,
    #[error("registries overlap on mode {0}")]
    OverlappingModes(ModeLabel),
    #[error("occupation has {found} photons, above truncation {truncation}")]
    AboveTruncation { found: u32, truncation: u32 },
    #[error("occupation length {found} does not match registry size {expected}")]
    OccupationLength { found: usize, expected: usize },
    #[error("registry too large for sparse indexing ({0} modes)")]
    RegistryTooLarge(usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn orthogonal(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => write!(f, "H"),
            Polarization::V => write!(f, "V"),
        }
    }
}

/// One distinguishable single-photon mode: spatial arm, polarization and spectral tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeLabel {
    pub arm: String,
    pub pol: Polarization,
    pub tag: String,
}

impl ModeLabel {
    pub fn new(arm: impl Into<String>, pol: Polarization, tag: impl Into<String>) -> Self {
        Self {
            arm: arm.into(),
            pol,
            tag: tag.into(),
        }
    }
}

impl fmt::Display for ModeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.arm, self.pol, self.tag)
    }
}

/// Ordered catalog of modes. Index lookup is a bijection with the label list.
#[derive(Debug, Clone)]
pub struct ModeRegistry {
    modes: Vec<ModeLabel>,
    index: HashMap<ModeLabel, usize>,
}

impl PartialEq for ModeRegistry {
    fn eq(&self, other: &Self) -> bool {
        self.modes == other.modes
    }
}

impl ModeRegistry {
    pub fn new(modes: Vec<ModeLabel>) -> Result<Self, FockError> {
        if modes.len() > u16::MAX as usize {
            return Err(FockError::RegistryTooLarge(modes.len()));
        }
        let mut index = HashMap::with_capacity(modes.len());
        for (i, m) in modes.iter().enumerate() {
            if index.insert(m.clone(), i).is_some() {
                return Err(FockError::DuplicateMode(m.clone()));
            }
        }
        Ok(Self { modes, index })
    }

    /// Every combination of `arms` × {H, V} × `tags`, in that nesting order.
    pub fn grid<A, T>(arms: &[A], tags: &[T]) -> Result<Self, FockError>
    where
        A: AsRef<str>,
        T: AsRef<str>,
    {
        let mut modes = Vec::with_capacity(arms.len() * tags.len() * 2);
        for arm in arms {
            for pol in [Polarization::H, Polarization::V] {
                for tag in tags {
                    modes.push(ModeLabel::new(arm.as_ref(), pol, tag.as_ref()));
                }
            }
        }
        Self::new(modes)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeLabel] {
        &self.modes
    }

    pub fn label(&self, index: usize) -> &ModeLabel {
        &self.modes[index]
    }

    pub fn index_of(&self, label: &ModeLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn require(&self, label: &ModeLabel) -> Result<usize, FockError> {
        self.index_of(label)
            .ok_or_else(|| FockError::UnregisteredMode(label.clone()))
    }

    /// Arms in order of first appearance.
    pub fn arms(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in &self.modes {
            if !out.contains(&m.arm.as_str()) {
                out.push(&m.arm);
            }
        }
        out
    }

    /// Spectral tags registered on `arm` (with any polarization), in registry order.
    pub fn tags_on_arm(&self, arm: &str) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for m in self.modes.iter().filter(|m| m.arm == arm) {
            if !out.contains(&m.tag.as_str()) {
                out.push(&m.tag);
            }
        }
        out
    }

    /// Concatenate two registries with no label in common.
    pub fn disjoint_union(&self, other: &ModeRegistry) -> Result<ModeRegistry, FockError> {
        for m in &other.modes {
            if self.index.contains_key(m) {
                return Err(FockError::OverlappingModes(m.clone()));
            }
        }
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        ModeRegistry::new(modes)
    }
}

/// Photon counts per mode, stored as sorted `(mode, count)` pairs with zero counts omitted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupation(SmallVec<[(u16, u8); 12]>);

impl Occupation {
    pub fn vacuum() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: &[u32]) -> Self {
        let mut v = SmallVec::new();
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                v.push((i as u16, c.min(u8::MAX as u32) as u8));
            }
        }
        Self(v)
    }

    /// Dense view, one entry per registered mode.
    pub fn to_counts(&self, n_modes: usize) -> Vec<u32> {
        let mut out = vec![0; n_modes];
        for &(m, c) in &self.0 {
            out[m as usize] = c as u32;
        }
        out
    }

    pub fn count(&self, mode: usize) -> u32 {
        match self.0.binary_search_by_key(&(mode as u16), |&(m, _)| m) {
            Ok(i) => self.0[i].1 as u32,
            Err(_) => 0,
        }
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&(_, c)| c as u32).sum()
    }

    /// Occupied `(mode, count)` pairs in increasing mode order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.0.iter().map(|&(m, c)| (m as usize, c as u32))
    }

    pub(crate) fn raw(&self) -> &[(u16, u8)] {
        &self.0
    }

    pub(crate) fn from_sorted_raw(raw: SmallVec<[(u16, u8); 12]>) -> Self {
        Self(raw)
    }

    /// Copy with one more photon in `mode`.
    pub fn with_added(&self, mode: usize) -> Self {
        let m = mode as u16;
        let mut v = self.0.clone();
        match v.binary_search_by_key(&m, |&(k, _)| k) {
            Ok(i) => v[i].1 += 1,
            Err(i) => v.insert(i, (m, 1)),
        }
        Self(v)
    }

    /// Merge two occupations; counts on shared modes add.
    pub fn merged(&self, other: &Occupation) -> Self {
        let (a, b) = (&self.0, &other.0);
        let mut v = SmallVec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => {
                    v.push(a[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    v.push(b[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    v.push((a[i].0, a[i].1 + b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        v.extend_from_slice(&a[i..]);
        v.extend_from_slice(&b[j..]);
        Self(v)
    }

    /// Same counts with every mode index shifted by `offset`.
    pub fn shifted(&self, offset: usize) -> Self {
        Self(self.0.iter().map(|&(m, c)| (m + offset as u16, c)).collect())
    }
}

/// A (possibly unnormalized) pure state over a mode registry.
#[derive(Debug, Clone)]
pub struct AmplitudeState {
    registry: Arc<ModeRegistry>,
    terms: BTreeMap<Occupation, Complex64>,
    truncation: u32,
    prune_epsilon: f64,
}

impl AmplitudeState {
    /// The vacuum |0…0⟩ with unit amplitude.
    pub fn vacuum(registry: Arc<ModeRegistry>, truncation: u32) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(Occupation::vacuum(), Complex64::new(1.0, 0.0));
        Self {
            registry,
            terms,
            truncation,
            prune_epsilon: DEFAULT_PRUNE_EPSILON,
        }
    }

    /// The zero vector.
    pub fn zero(registry: Arc<ModeRegistry>, truncation: u32) -> Self {
        Self {
            registry,
            terms: BTreeMap::new(),
            truncation,
            prune_epsilon: DEFAULT_PRUNE_EPSILON,
        }
    }

    /// Build a state from dense occupation vectors. Terms above truncation are an error;
    /// repeated occupations accumulate.
    pub fn from_terms<I>(registry: Arc<ModeRegistry>, truncation: u32, terms: I) -> Result<Self, FockError>
    where
        I: IntoIterator<Item = (Vec<u32>, Complex64)>,
    {
        let mut state = Self::zero(registry, truncation);
        for (counts, amp) in terms {
            if counts.len() != state.registry.len() {
                return Err(FockError::OccupationLength {
                    found: counts.len(),
                    expected: state.registry.len(),
                });
            }
            let occ = Occupation::from_counts(&counts);
            let n = occ.total();
            if n > truncation {
                return Err(FockError::AboveTruncation {
                    found: n,
                    truncation,
                });
            }
            *state.terms.entry(occ).or_default() += amp;
        }
        state.prune();
        Ok(state)
    }

    pub(crate) fn from_map(
        registry: Arc<ModeRegistry>,
        truncation: u32,
        prune_epsilon: f64,
        terms: BTreeMap<Occupation, Complex64>,
    ) -> Self {
        let mut s = Self {
            registry,
            terms,
            truncation,
            prune_epsilon,
        };
        s.prune();
        s
    }

    pub fn with_prune_epsilon(mut self, eps: f64) -> Self {
        self.prune_epsilon = eps;
        self.prune();
        self
    }

    pub fn prune_epsilon(&self) -> f64 {
        self.prune_epsilon
    }

    pub fn registry(&self) -> &Arc<ModeRegistry> {
        &self.registry
    }

    pub fn truncation(&self) -> u32 {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &Complex64)> {
        self.terms.iter()
    }

    pub fn amplitude(&self, occ: &Occupation) -> Complex64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    /// Amplitude of a dense occupation vector.
    pub fn amplitude_of(&self, counts: &[u32]) -> Complex64 {
        self.amplitude(&Occupation::from_counts(counts))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Unit-norm copy, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return None;
        }
        Some(self.scaled(Complex64::new(1.0 / n.sqrt(), 0.0)))
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let terms = self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect();
        Self::from_map(self.registry.clone(), self.truncation, self.prune_epsilon, terms)
    }

    /// Superposition `self + other` over the same registry.
    pub fn added(&self, other: &AmplitudeState) -> Result<Self, FockError> {
        self.check_registry(other)?;
        let mut terms = self.terms.clone();
        for (k, v) in &other.terms {
            if k.total() <= self.truncation {
                *terms.entry(k.clone()).or_default() += v;
            }
        }
        Ok(Self::from_map(
            self.registry.clone(),
            self.truncation,
            self.prune_epsilon,
            terms,
        ))
    }

    /// Keep only terms whose occupation satisfies `keep`.
    pub fn filtered<F: Fn(&Occupation) -> bool>(&self, keep: F) -> Self {
        let terms = self
            .terms
            .iter()
            .filter(|(k, _)| keep(k))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        Self::from_map(self.registry.clone(), self.truncation, self.prune_epsilon, terms)
    }

    /// Apply `coeff · a†` on a registered mode. Terms pushed above truncation are dropped.
    pub fn apply_creation(&self, mode: &ModeLabel, coeff: Complex64) -> Result<Self, FockError> {
        let idx = self.registry.require(mode)?;
        Ok(self.apply_creation_at(idx, coeff))
    }

    pub fn apply_creation_at(&self, mode: usize, coeff: Complex64) -> Self {
        let mut terms = BTreeMap::new();
        for (occ, amp) in &self.terms {
            if occ.total() + 1 > self.truncation {
                continue;
            }
            let n = occ.count(mode) as f64;
            terms.insert(occ.with_added(mode), amp * coeff * (n + 1.0).sqrt());
        }
        Self::from_map(self.registry.clone(), self.truncation, self.prune_epsilon, terms)
    }

    /// ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &AmplitudeState) -> Result<Complex64, FockError> {
        self.check_registry(other)?;
        let (small, large, conj_small) = if self.terms.len() <= other.terms.len() {
            (&self.terms, &other.terms, true)
        } else {
            (&other.terms, &self.terms, false)
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, v) in small {
            if let Some(w) = large.get(k) {
                acc += if conj_small { v.conj() * w } else { w.conj() * v };
            }
        }
        Ok(acc)
    }

    /// State on the concatenated registry `self.registry ++ other.registry`.
    /// The truncation is the combined budget, optionally capped.
    pub fn tensor_product(&self, other: &AmplitudeState, cap: Option<u32>) -> Result<Self, FockError> {
        let registry = Arc::new(self.registry.disjoint_union(&other.registry)?);
        let mut truncation = self.truncation + other.truncation;
        if let Some(c) = cap {
            truncation = truncation.min(c);
        }
        let offset = self.registry.len();
        let mut terms = BTreeMap::new();
        for (ka, va) in &self.terms {
            for (kb, vb) in &other.terms {
                if ka.total() + kb.total() > truncation {
                    continue;
                }
                let occ = ka.merged(&kb.shifted(offset));
                *terms.entry(occ).or_default() += va * vb;
            }
        }
        Ok(Self::from_map(registry, truncation, self.prune_epsilon, terms))
    }

    /// Product of two states on the same registry whose occupied modes never overlap,
    /// as for independent sources already embedded in a shared registry.
    pub fn disjoint_product(&self, other: &AmplitudeState) -> Result<Self, FockError> {
        self.check_registry(other)?;
        let support = |s: &AmplitudeState| {
            let mut modes: Vec<u16> = s.terms.keys().flat_map(|k| k.0.iter().map(|&(m, _)| m)).collect();
            modes.sort_unstable();
            modes.dedup();
            modes
        };
        let sa = support(self);
        for m in support(other) {
            if sa.binary_search(&m).is_ok() {
                return Err(FockError::OverlappingModes(self.registry.label(m as usize).clone()));
            }
        }
        let mut terms = BTreeMap::new();
        for (ka, va) in &self.terms {
            for (kb, vb) in &other.terms {
                if ka.total() + kb.total() > self.truncation {
                    continue;
                }
                *terms.entry(ka.merged(kb)).or_default() += va * vb;
            }
        }
        Ok(Self::from_map(
            self.registry.clone(),
            self.truncation,
            self.prune_epsilon,
            terms,
        ))
    }

    pub(crate) fn check_registry(&self, other: &AmplitudeState) -> Result<(), FockError> {
        if Arc::ptr_eq(&self.registry, &other.registry) || *self.registry == *other.registry {
            Ok(())
        } else {
            Err(FockError::RegistryMismatch)
        }
    }

    fn prune(&mut self) {
        let eps = self.prune_epsilon;
        self.terms.retain(|_, a| a.norm() >= eps);
    }

    /// Line-oriented dump: `n0,n1,…,nk re im` per term, amplitudes in shortest
    /// round-trip form. An empty registry writes `-` for the occupation.
    pub fn to_text(&self) -> String {
        let n = self.registry.len();
        let mut out = String::new();
        for (occ, amp) in &self.terms {
            let counts: Vec<String> = occ.to_counts(n).iter().map(|c| c.to_string()).collect();
            let occ_text = if counts.is_empty() { "-".to_string() } else { counts.join(",") };
            out.push_str(&format!("{} {:e} {:e}\n", occ_text, amp.re, amp.im));
        }
        out
    }

    pub fn from_text(registry: Arc<ModeRegistry>, truncation: u32, text: &str) -> Result<Self, FockError> {
        let mut terms = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| FockError::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut parts = line.split_whitespace();
            let occ = parts.next().ok_or_else(|| err("missing occupation"))?;
            let re = parts.next().ok_or_else(|| err("missing real part"))?;
            let im = parts.next().ok_or_else(|| err("missing imaginary part"))?;
            if parts.next().is_some() {
                return Err(err("trailing fields"));
            }
            let counts = if occ == "-" {
                Vec::new()
            } else {
                occ.split(',')
                    .map(|c| c.parse::<u32>().map_err(|e| err(&e.to_string())))
                    .collect::<Result<Vec<_>, _>>()?
            };
            let re: f64 = re.parse().map_err(|_| err("bad real part"))?;
            let im: f64 = im.parse().map_err(|_| err("bad imaginary part"))?;
            terms.push((counts, Complex64::new(re, im)));
        }
        Self::from_terms(registry, truncation, terms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(n: usize) -> Arc<ModeRegistry> {
        let modes = (0..n)
            .map(|i| ModeLabel::new(format!("m{i}"), Polarization::H, "e"))
            .collect();
        Arc::new(ModeRegistry::new(modes).unwrap())
    }

    fn one() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    #[test]
    fn vacuum_is_single_unit_term() {
        let s = AmplitudeState::vacuum(reg(4), 8);
        assert_eq!(s.len(), 1);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        assert!((s.inner_product(&s).unwrap() - one()).norm() < 1e-15);
    }

    #[test]
    fn empty_registry_vacuum() {
        let s = AmplitudeState::vacuum(reg(0), 0);
        assert_eq!(s.len(), 1);
        assert_eq!(s.norm_sqr(), 1.0);
    }

    #[test]
    fn creation_factors() {
        let r = reg(1);
        let m = r.label(0).clone();
        let s = AmplitudeState::vacuum(r, 4).apply_creation(&m, one()).unwrap();
        assert_eq!(s.amplitude_of(&[1]), one());
        let s2 = s.apply_creation(&m, one()).unwrap();
        assert!((s2.amplitude_of(&[2]).re - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn creation_at_truncation_drops_term() {
        let r = reg(2);
        let (m0, m1) = (r.label(0).clone(), r.label(1).clone());
        // (|0,0> + |1,0>)/sqrt2 then a1^dagger with truncation 1: only |0,1> survives.
        let s = AmplitudeState::from_terms(
            r,
            1,
            vec![
                (vec![0, 0], Complex64::new(0.5f64.sqrt(), 0.0)),
                (vec![1, 0], Complex64::new(0.5f64.sqrt(), 0.0)),
            ],
        )
        .unwrap();
        let t = s.apply_creation(&m1, one()).unwrap();
        assert_eq!(t.len(), 1);
        assert!((t.norm_sqr() - 0.5).abs() < 1e-15);
        let _ = m0;
    }

    #[test]
    fn unregistered_mode_is_an_error() {
        let s = AmplitudeState::vacuum(reg(1), 2);
        let bogus = ModeLabel::new("x", Polarization::V, "o");
        assert!(matches!(
            s.apply_creation(&bogus, one()),
            Err(FockError::UnregisteredMode(_))
        ));
    }

    #[test]
    fn registry_rejects_duplicates() {
        let m = ModeLabel::new("a", Polarization::H, "e");
        assert!(matches!(
            ModeRegistry::new(vec![m.clone(), m]),
            Err(FockError::DuplicateMode(_))
        ));
    }

    #[test]
    fn inner_product_registry_mismatch() {
        let a = AmplitudeState::vacuum(reg(1), 2);
        let b = AmplitudeState::vacuum(reg(2), 2);
        assert_eq!(a.inner_product(&b), Err(FockError::RegistryMismatch));
    }

    #[test]
    fn tensor_of_vacua_and_single_photons() {
        let ra = Arc::new(ModeRegistry::new(vec![ModeLabel::new("a", Polarization::H, "e")]).unwrap());
        let rb = Arc::new(ModeRegistry::new(vec![ModeLabel::new("b", Polarization::H, "e")]).unwrap());
        let va = AmplitudeState::vacuum(ra.clone(), 2);
        let vb = AmplitudeState::vacuum(rb.clone(), 2);
        let vv = va.tensor_product(&vb, None).unwrap();
        assert_eq!(vv.len(), 1);
        assert_eq!(vv.amplitude_of(&[0, 0]), one());

        let a1 = va.apply_creation(ra.label(0), one()).unwrap();
        let b1 = vb.apply_creation(rb.label(0), one()).unwrap();
        let ab = a1.tensor_product(&b1, None).unwrap();
        assert_eq!(ab.amplitude_of(&[1, 1]), one());
    }

    #[test]
    fn tensor_expands_superpositions() {
        let ra = Arc::new(ModeRegistry::new(vec![ModeLabel::new("a", Polarization::H, "e")]).unwrap());
        let rb = Arc::new(ModeRegistry::new(vec![ModeLabel::new("b", Polarization::H, "e")]).unwrap());
        let (al, be, ga, de) = (
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
            Complex64::new(0.28, 0.0),
            Complex64::new(0.96, 0.0),
        );
        let a = AmplitudeState::from_terms(ra, 1, vec![(vec![0], al), (vec![1], be)]).unwrap();
        let b = AmplitudeState::from_terms(rb, 1, vec![(vec![0], ga), (vec![1], de)]).unwrap();
        let ab = a.tensor_product(&b, None).unwrap();
        assert_eq!(ab.len(), 4);
        assert_eq!(ab.amplitude_of(&[0, 0]), al * ga);
        assert_eq!(ab.amplitude_of(&[0, 1]), al * de);
        assert_eq!(ab.amplitude_of(&[1, 0]), be * ga);
        assert_eq!(ab.amplitude_of(&[1, 1]), be * de);
        // A cap of one photon removes the doubly excited term.
        let capped = a.tensor_product(&b, Some(1)).unwrap();
        assert_eq!(capped.len(), 3);
    }

    #[test]
    fn tensor_rejects_overlap() {
        let a = AmplitudeState::vacuum(reg(1), 1);
        assert!(matches!(
            a.tensor_product(&a, None),
            Err(FockError::OverlappingModes(_))
        ));
    }

    #[test]
    fn prune_removes_dust() {
        let r = reg(1);
        let s = AmplitudeState::from_terms(r, 2, vec![(vec![0], one()), (vec![1], Complex64::new(1e-17, 0.0))]).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn text_round_trip() {
        let r = reg(3);
        let s = AmplitudeState::from_terms(
            r.clone(),
            3,
            vec![
                (vec![1, 0, 2], Complex64::new(0.1, -0.3)),
                (vec![0, 1, 0], Complex64::new(1.0 / 3.0, std::f64::consts::PI)),
            ],
        )
        .unwrap();
        let text = s.to_text();
        let back = AmplitudeState::from_text(r, 3, &text).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.amplitude_of(&[0, 1, 0]), Complex64::new(1.0 / 3.0, std::f64::consts::PI));
    }

    #[test]
    fn text_parse_errors_carry_line() {
        let err = AmplitudeState::from_text(reg(1), 2, "1 0.5 0\n1 x 0\n").unwrap_err();
        assert_eq!(
            err,
            FockError::Parse {
                line: 2,
                msg: "bad real part".into()
            }
        );
    }
}
