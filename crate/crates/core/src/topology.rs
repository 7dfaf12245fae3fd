//! Fusion topologies, double-pair error enumeration and coincidence-rate estimates.
//!
//! Arms are numbered from 1. Source `s` (from 1) owns two arms; its e photon
//! leaves on arm `2s-1` for odd `s` and `2s` for even `s`, so with four sources the
//! e photons sit on arms 1, 4, 5 and 8 and the o photons on 2, 3, 6 and 7.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::Polarization;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("a topology needs at least one source")]
    NoSources,
    #[error("arm {arm} does not exist (valid arms are 1..={max})")]
    UnknownArm { arm: usize, max: usize },
    #[error("edge ({0}, {1}) joins an arm to itself")]
    SelfLoop(usize, usize),
    #[error("edge ({0}, {1}) joins arms that are already connected")]
    Cycle(usize, usize),
    #[error("topology is disconnected: {0} separate components")]
    Disconnected(usize),
    #[error("unknown topology shape '{0}' (expected star, chain or custom)")]
    UnknownShape(String),
    #[error("{name} = {value} is out of range")]
    OutOfRange { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyShape {
    Star,
    Chain,
    Custom,
}

impl fmt::Display for TopologyShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologyShape::Star => "star",
            TopologyShape::Chain => "chain",
            TopologyShape::Custom => "custom",
        })
    }
}

impl std::str::FromStr for TopologyShape {
    type Err = TopologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "star" => Ok(TopologyShape::Star),
            "chain" => Ok(TopologyShape::Chain),
            "custom" => Ok(TopologyShape::Custom),
            other => Err(TopologyError::UnknownShape(other.to_string())),
        }
    }
}

pub fn e_arm(source: usize) -> usize {
    if source % 2 == 1 {
        2 * source - 1
    } else {
        2 * source
    }
}

pub fn o_arm(source: usize) -> usize {
    if source % 2 == 1 {
        2 * source
    } else {
        2 * source - 1
    }
}

/// Source owning `arm`.
pub fn source_of_arm(arm: usize) -> usize {
    arm.div_ceil(2)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FusionTopology {
    shape: TopologyShape,
    sources: usize,
    edges: Vec<(usize, usize)>,
}

/// Union-find over arms 1..=n.
struct Components {
    parent: Vec<usize>,
}

impl Components {
    fn new(n: usize) -> Self {
        Self { parent: (0..=n).collect() }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        self.parent[x] = r;
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[rb] = ra;
        true
    }
}

impl FusionTopology {
    /// Pairs components level by level: sources (1,2), (3,4), … first, then the
    /// resulting groups, always fusing on the later group's representative arm.
    /// Four sources give edges (1,4), (5,8), (4,8).
    pub fn star(sources: usize) -> Result<Self, TopologyError> {
        if sources == 0 {
            return Err(TopologyError::NoSources);
        }
        let mut reps: Vec<usize> = (1..=sources).map(e_arm).collect();
        let mut edges = Vec::new();
        while reps.len() > 1 {
            let mut next = Vec::new();
            for chunk in reps.chunks(2) {
                if let [x, y] = chunk {
                    edges.push((*x, *y));
                    next.push(*y);
                } else {
                    next.push(chunk[0]);
                }
            }
            reps = next;
        }
        Ok(Self {
            shape: TopologyShape::Star,
            sources,
            edges,
        })
    }

    /// Each source's o photon fused with the next source's e photon.
    pub fn chain(sources: usize) -> Result<Self, TopologyError> {
        if sources == 0 {
            return Err(TopologyError::NoSources);
        }
        let edges = (1..sources).map(|s| (o_arm(s), e_arm(s + 1))).collect();
        Ok(Self {
            shape: TopologyShape::Chain,
            sources,
            edges,
        })
    }

    /// Explicit edge list, applied in order. Each edge must join two previously
    /// unconnected groups of arms.
    pub fn custom(sources: usize, edges: Vec<(usize, usize)>) -> Result<Self, TopologyError> {
        if sources == 0 {
            return Err(TopologyError::NoSources);
        }
        let max = 2 * sources;
        let mut comps = Components::new(max);
        for s in 1..=sources {
            comps.union(e_arm(s), o_arm(s));
        }
        for &(x, y) in &edges {
            for arm in [x, y] {
                if arm == 0 || arm > max {
                    return Err(TopologyError::UnknownArm { arm, max });
                }
            }
            if x == y {
                return Err(TopologyError::SelfLoop(x, y));
            }
            if !comps.union(x, y) {
                return Err(TopologyError::Cycle(x, y));
            }
        }
        Ok(Self {
            shape: TopologyShape::Custom,
            sources,
            edges,
        })
    }

    pub fn from_shape(shape: TopologyShape, sources: usize, edges: Option<Vec<(usize, usize)>>) -> Result<Self, TopologyError> {
        match shape {
            TopologyShape::Star => Self::star(sources),
            TopologyShape::Chain => Self::chain(sources),
            TopologyShape::Custom => Self::custom(sources, edges.unwrap_or_default()),
        }
    }

    pub fn shape(&self) -> TopologyShape {
        self.shape
    }

    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn n_arms(&self) -> usize {
        2 * self.sources
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn component_count(&self) -> usize {
        let n = self.n_arms();
        let mut comps = Components::new(n);
        for s in 1..=self.sources {
            comps.union(e_arm(s), o_arm(s));
        }
        for &(x, y) in &self.edges {
            comps.union(x, y);
        }
        (1..=n).map(|a| comps.find(a)).collect::<BTreeSet<_>>().len()
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Output arm of a photon entering the fusion network on `arm` with
    /// polarization `pol`: H is transmitted and keeps its arm, V is reflected to
    /// the partner arm at each PBS it meets.
    pub fn destination(&self, arm: usize, pol: Polarization) -> usize {
        let mut a = arm;
        if pol == Polarization::V {
            for &(x, y) in &self.edges {
                if a == x {
                    a = y;
                } else if a == y {
                    a = x;
                }
            }
        }
        a
    }
}

/// Pair numbers per source.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmissionPattern(pub Vec<u32>);

impl EmissionPattern {
    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_desired(&self) -> bool {
        self.0.iter().all(|&n| n == 1)
    }
}

impl fmt::Display for EmissionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// All pair-number vectors over `sources` sources summing to `order`, in lexicographic order.
pub fn compositions(sources: usize, order: u32) -> Vec<EmissionPattern> {
    fn rec(left: usize, order: u32, cur: &mut Vec<u32>, out: &mut Vec<EmissionPattern>) {
        if left == 1 {
            cur.push(order);
            out.push(EmissionPattern(cur.clone()));
            cur.pop();
            return;
        }
        for n in 0..=order {
            cur.push(n);
            rec(left - 1, order - n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if sources > 0 {
        rec(sources, order, &mut Vec::new(), &mut out);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErrorTerm {
    pub pattern: EmissionPattern,
    pub multiplicity: u64,
    pub erroneous: bool,
}

/// Whether some choice of HH/VV pair polarizations lets every output arm receive
/// at least one photon. Losses can remove any surplus photons, and bucket
/// detectors hide doubled ones.
pub fn can_cover_all_arms(topology: &FusionTopology, pattern: &EmissionPattern) -> bool {
    let n = topology.n_arms();
    let full: u64 = (1u64 << n) - 1;
    // Arms reachable by each source for each count of HH pairs.
    let mut reachable: BTreeSet<u64> = BTreeSet::from([0]);
    for (i, &pairs) in pattern.0.iter().enumerate() {
        let s = i + 1;
        let mut options = BTreeSet::new();
        for k in 0..=pairs {
            let mut mask = 0u64;
            for (count, pol) in [(k, Polarization::H), (pairs - k, Polarization::V)] {
                if count > 0 {
                    for arm in [e_arm(s), o_arm(s)] {
                        mask |= 1 << (topology.destination(arm, pol) - 1);
                    }
                }
            }
            options.insert(mask);
        }
        reachable = reachable.iter().flat_map(|r| options.iter().map(move |o| r | o)).collect();
    }
    reachable.contains(&full)
}

/// Emission patterns of the given total pair number that can yield an accepted
/// n-fold coincidence, one per pattern. Only the one-pair-per-source pattern is
/// flagged non-erroneous.
pub fn enumerate_error_terms(topology: &FusionTopology, order: u32) -> Vec<ErrorTerm> {
    if (order as usize) < topology.sources() {
        return Vec::new();
    }
    compositions(topology.sources(), order)
        .into_iter()
        .filter(|p| can_cover_all_arms(topology, p))
        .map(|p| ErrorTerm {
            erroneous: !p.is_desired(),
            pattern: p,
            multiplicity: 1,
        })
        .collect()
}

/// Sum of multiplicities over erroneous terms: the coefficient of p^order.
pub fn erroneous_total(terms: &[ErrorTerm]) -> u64 {
    terms.iter().filter(|t| t.erroneous).map(|t| t.multiplicity).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate {
    pub n_fold_rate_hz: f64,
    pub p: f64,
    pub xi: f64,
    pub repetition_rate_hz: f64,
    pub n_pairs: u32,
    pub success_factor: f64,
}

impl RateEstimate {
    /// Mean waiting time per event, `None` for a zero rate.
    pub fn hours_per_event(&self) -> Option<f64> {
        (self.n_fold_rate_hz > 0.0).then(|| 1.0 / self.n_fold_rate_hz / 3600.0)
    }

    pub fn events_per_hour(&self) -> f64 {
        self.n_fold_rate_hz * 3600.0
    }
}

fn check_unit(name: &'static str, value: f64) -> Result<(), TopologyError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(TopologyError::OutOfRange { name, value })
    }
}

/// `repetition_rate · (p·ξ)^n_pairs · success_factor`.
pub fn n_fold_rate(p: f64, xi: f64, repetition_rate_hz: f64, n_pairs: u32, success_factor: f64) -> Result<RateEstimate, TopologyError> {
    check_unit("p", p)?;
    check_unit("xi", xi)?;
    if !(repetition_rate_hz >= 0.0 && repetition_rate_hz.is_finite()) {
        return Err(TopologyError::OutOfRange {
            name: "repetition_rate_hz",
            value: repetition_rate_hz,
        });
    }
    if !(success_factor > 0.0 && success_factor <= 1.0) {
        return Err(TopologyError::OutOfRange {
            name: "success_factor",
            value: success_factor,
        });
    }
    Ok(RateEstimate {
        n_fold_rate_hz: repetition_rate_hz * (p * xi).powi(n_pairs as i32) * success_factor,
        p,
        xi,
        repetition_rate_hz,
        n_pairs,
        success_factor,
    })
}

/// Success factor that makes [`n_fold_rate`] hit `target_hz`. May exceed 1 when the
/// target is not reachable with the given inputs.
pub fn solve_success_factor(target_hz: f64, p: f64, xi: f64, repetition_rate_hz: f64, n_pairs: u32) -> f64 {
    target_hz / (repetition_rate_hz * (p * xi).powi(n_pairs as i32))
}

/// The `(p·ξ)` implied by an observed rate.
pub fn implied_p_xi(target_hz: f64, repetition_rate_hz: f64, n_pairs: u32, success_factor: f64) -> f64 {
    (target_hz / (repetition_rate_hz * success_factor)).powf(1.0 / n_pairs as f64)
}

/// Edges of a graph state locally equivalent to the fused output.
///
/// A source's pair is a two-vertex graph centred on its e arm. Fusing two GHZ-type
/// components gives a larger GHZ state, whose graph is a star; the merged star keeps
/// the centre of the component holding the edge's first arm. Edges are returned
/// sorted as (centre, leaf).
pub fn graph_state_edges(topology: &FusionTopology) -> Result<Vec<(usize, usize)>, TopologyError> {
    let count = topology.component_count();
    if count != 1 {
        return Err(TopologyError::Disconnected(count));
    }
    // Each component: (centre, members).
    let mut comps: Vec<(usize, BTreeSet<usize>)> = (1..=topology.sources())
        .map(|s| (e_arm(s), BTreeSet::from([e_arm(s), o_arm(s)])))
        .collect();
    for &(x, y) in topology.edges() {
        let ix = comps.iter().position(|c| c.1.contains(&x)).expect("arm in a component");
        let iy = comps.iter().position(|c| c.1.contains(&y)).expect("arm in a component");
        let (_, absorbed) = comps[iy].clone();
        comps[ix].1.extend(absorbed);
        comps.remove(iy);
    }
    let (centre, members) = &comps[0];
    let mut edges: Vec<(usize, usize)> = members.iter().filter(|&&m| m != *centre).map(|&m| (*centre, m)).collect();
    edges.sort();
    Ok(edges)
}
