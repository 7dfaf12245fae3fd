use std::sync::Arc;

use eightfold::fock::{AmplitudeState, ModeLabel, ModeRegistry, Polarization};
use num_complex::Complex64;
use proptest::prelude::*;

fn registry(n_modes: usize) -> Arc<ModeRegistry> {
    let modes = (0..n_modes)
        .map(|i| ModeLabel::new(format!("a{}", i / 2), if i % 2 == 0 { Polarization::H } else { Polarization::V }, "t"))
        .collect();
    Arc::new(ModeRegistry::new(modes).unwrap())
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Dense reference: amplitudes indexed by base-(cap+1) digits, one per mode.
struct Dense {
    modes: usize,
    cap: u32,
    amps: Vec<Complex64>,
}

impl Dense {
    fn vacuum(modes: usize, cap: u32) -> Self {
        let mut amps = vec![c(0.0, 0.0); ((cap + 1) as usize).pow(modes as u32)];
        amps[0] = c(1.0, 0.0);
        Self { modes, cap, amps }
    }

    fn digits(&self, mut idx: usize) -> Vec<u32> {
        let base = (self.cap + 1) as usize;
        (0..self.modes)
            .map(|_| {
                let d = (idx % base) as u32;
                idx /= base;
                d
            })
            .collect()
    }

    fn index(&self, digits: &[u32]) -> usize {
        let base = (self.cap + 1) as usize;
        digits.iter().rev().fold(0, |acc, &d| acc * base + d as usize)
    }

    fn create(&self, mode: usize, coeff: Complex64) -> Self {
        let mut out = vec![c(0.0, 0.0); self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            if a.norm() == 0.0 {
                continue;
            }
            let mut d = self.digits(i);
            if d.iter().sum::<u32>() + 1 > self.cap {
                continue;
            }
            d[mode] += 1;
            out[self.index(&d)] += a * coeff * (d[mode] as f64).sqrt();
        }
        Self {
            modes: self.modes,
            cap: self.cap,
            amps: out,
        }
    }
}

fn random_state(reg: &Arc<ModeRegistry>, trunc: u32, terms: &[(Vec<u32>, (f64, f64))]) -> AmplitudeState {
    let n = reg.len();
    let filtered = terms.iter().filter_map(|(counts, (re, im))| {
        let counts: Vec<u32> = counts.iter().take(n).copied().collect();
        (counts.len() == n && counts.iter().sum::<u32>() <= trunc).then(|| (counts, c(*re, *im)))
    });
    AmplitudeState::from_terms(reg.clone(), trunc, filtered).unwrap()
}

fn term_strategy(modes: usize) -> impl Strategy<Value = Vec<(Vec<u32>, (f64, f64))>> {
    prop::collection::vec((prop::collection::vec(0u32..3, modes), (-1.0..1.0f64, -1.0..1.0f64)), 1..6)
}

proptest! {
    #[test]
    fn creation_operators_commute(
        terms in term_strategy(4),
        m1 in 0usize..4,
        m2 in 0usize..4,
        c1 in (-1.0..1.0f64, -1.0..1.0f64),
        c2 in (-1.0..1.0f64, -1.0..1.0f64),
    ) {
        prop_assume!(m1 != m2);
        let reg = registry(4);
        let s = random_state(&reg, 6, &terms);
        let (a, b) = (c(c1.0, c1.1), c(c2.0, c2.1));
        let x = s.apply_creation_at(m1, a).apply_creation_at(m2, b);
        let y = s.apply_creation_at(m2, b).apply_creation_at(m1, a);
        prop_assert_eq!(x.len(), y.len());
        // Same factors multiplied in a different order: equal up to rounding.
        for (occ, amp) in x.terms() {
            prop_assert!((*amp - y.amplitude(occ)).norm() <= 4.0 * f64::EPSILON * amp.norm());
        }
    }

    #[test]
    fn creation_sequence_matches_dense_expansion(
        ops in prop::collection::vec((0usize..4, -1.0..1.0f64, -1.0..1.0f64), 0..6),
        modes in 1usize..=4,
        cap in 1u32..=4,
    ) {
        let reg = registry(modes);
        let mut sparse = AmplitudeState::vacuum(reg.clone(), cap);
        let mut dense = Dense::vacuum(modes, cap);
        for &(m, re, im) in &ops {
            let m = m % modes;
            sparse = sparse.apply_creation_at(m, c(re, im));
            dense = dense.create(m, c(re, im));
        }
        let dense_norm: f64 = dense.amps.iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((sparse.norm_sqr() - dense_norm).abs() < 1e-12);
        for (i, a) in dense.amps.iter().enumerate() {
            prop_assert!((sparse.amplitude_of(&dense.digits(i)) - a).norm() < 1e-12);
        }
    }

    #[test]
    fn inner_product_is_conjugate_symmetric(ta in term_strategy(4), tb in term_strategy(4)) {
        let reg = registry(4);
        let (a, b) = (random_state(&reg, 8, &ta), random_state(&reg, 8, &tb));
        let ab = a.inner_product(&b).unwrap();
        let ba = b.inner_product(&a).unwrap();
        prop_assert!((ab - ba.conj()).norm() < 1e-12);
    }

    #[test]
    fn tensor_product_norm_is_product(ta in term_strategy(2), tb in term_strategy(4)) {
        let (ra, rb) = (registry(2), Arc::new(ModeRegistry::new(
            registry(4).modes().iter().map(|m| ModeLabel::new(format!("b{}", m.arm), m.pol, m.tag.clone())).collect()
        ).unwrap()));
        let (a, b) = (random_state(&ra, 6, &ta), random_state(&rb, 8, &tb));
        let t = a.tensor_product(&b, None).unwrap();
        prop_assert!((t.norm_sqr() - a.norm_sqr() * b.norm_sqr()).abs() < 1e-12 * (1.0 + t.norm_sqr()));
    }
}
