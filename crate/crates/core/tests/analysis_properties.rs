use eightfold::analysis::{
    fidelity_witness, m_k_expectation, populations, significance, witness_from_tables, Ratio, Significance,
};
use eightfold::experiment::{Apparatus, CoincidenceHistogram, MeasurementSetting, OutcomeDistribution};
use proptest::prelude::*;

fn hist(setting: MeasurementSetting, n: usize, counts: Vec<u64>) -> CoincidenceHistogram {
    CoincidenceHistogram::new(setting, n, counts, 3600.0, Some(1))
}

fn counts_strategy(n: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..50, 1 << n).prop_filter("non-empty", |c| c.iter().sum::<u64>() > 0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn correlation_is_invariant_under_global_complement(counts in counts_strategy(8), k in 0u32..8) {
        let mask = 255usize;
        let flipped: Vec<u64> = (0..256).map(|b| counts[b ^ mask]).collect();
        let a = m_k_expectation(&hist(MeasurementSetting::Phase { k }, 8, counts), k).unwrap();
        let b = m_k_expectation(&hist(MeasurementSetting::Phase { k }, 8, flipped), k).unwrap();
        prop_assert!((a.value - b.value).abs() < 1e-15);
        prop_assert!((a.sigma - b.sigma).abs() < 1e-15);
    }

    #[test]
    fn sigma_scales_as_inverse_root_n(counts in counts_strategy(8), k in 0u32..8) {
        let small = hist(MeasurementSetting::Phase { k }, 8, counts.clone());
        let large = hist(MeasurementSetting::Phase { k }, 8, counts.iter().map(|c| c * 100).collect());
        let (a, b) = (m_k_expectation(&small, k).unwrap(), m_k_expectation(&large, k).unwrap());
        prop_assert!((a.value - b.value).abs() < 1e-12);
        prop_assert!((a.sigma - 10.0 * b.sigma).abs() < 1e-12);
    }

    #[test]
    fn witness_stays_in_range(
        tables in prop::collection::vec(counts_strategy(4), 5),
    ) {
        let hists: Vec<CoincidenceHistogram> = MeasurementSetting::standard(4)
            .into_iter()
            .zip(tables)
            .map(|(s, c)| hist(s, 4, c))
            .collect();
        let r = witness_from_tables(&hists).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r.fidelity.value));
        prop_assert!(r.fidelity.sigma >= 0.0);
        prop_assert_eq!(r.entangled, r.fidelity.value > 0.5);
    }
}

#[test]
fn sigma_at_hundred_and_ten_thousand_events() {
    // Half the weight on even parity, a quarter each on two odd patterns.
    let make = |scale: u64| {
        let mut c = vec![0u64; 256];
        c[0] = 50 * scale;
        c[1] = 25 * scale;
        c[3] = 0;
        c[7] = 25 * scale;
        hist(MeasurementSetting::Phase { k: 0 }, 8, c)
    };
    let (a, b) = (m_k_expectation(&make(1), 0).unwrap(), m_k_expectation(&make(100), 0).unwrap());
    // Mean 0, each outcome ±1: σ = 1/√N.
    assert!((a.sigma - 0.1).abs() < 1e-15);
    assert!((b.sigma - 0.01).abs() < 1e-15);
}

#[test]
fn ideal_exact_tables_give_unit_fidelity() {
    let ensemble = Apparatus::ideal(4, 0.058).unwrap().prepare().unwrap();
    let tables: Vec<OutcomeDistribution> = MeasurementSetting::standard(8).iter().map(|s| ensemble.distribution(s).unwrap()).collect();
    let r = witness_from_tables(&tables).unwrap();
    assert!((r.fidelity.value - 1.0).abs() < 1e-12);
    assert_eq!(r.fidelity.sigma, 0.0);
    assert_eq!(r.hv_snr, Ratio::Unbounded);
    assert_eq!(r.significance, Significance::Unbounded { positive: true });
    assert!(r.to_text().contains("hv_snr = unbounded"));
    for (_, v, _) in r.signed_correlations() {
        assert!((v - 1.0).abs() < 1e-12);
    }
}

#[test]
fn witness_from_populations_and_correlations() {
    // 0.4 population term, every signed correlation 0.3: F = 0.4 + 8·0.3/16.
    let mut c = vec![0u64; 256];
    c[0] = 40;
    c[255] = 40;
    c[1] = 20;
    let pop = populations(&hist(MeasurementSetting::Computational, 8, c)).unwrap();
    assert!((pop.population_term.value - 0.4).abs() < 1e-15);
    let corr: Vec<_> = (0..8u32)
        .map(|k| {
            let mut c = vec![0u64; 256];
            // 65 even, 35 odd patterns: ⟨M⟩ = 0.3, sign flipped for odd k.
            let (even, odd) = if k % 2 == 0 { (65, 35) } else { (35, 65) };
            c[0] = even;
            c[1] = odd;
            (k, m_k_expectation(&hist(MeasurementSetting::Phase { k }, 8, c), k).unwrap())
        })
        .collect();
    let r = fidelity_witness(&pop, &corr).unwrap();
    assert!((r.fidelity.value - 0.55).abs() < 1e-12);
    assert!((r.mean_signed_correlation() - 0.3).abs() < 1e-12);
}

#[test]
fn significance_of_reference_numbers() {
    match significance(0.708, 0.016) {
        Significance::Sigmas(s) => assert!((s - 13.0).abs() < 1e-9),
        other => panic!("{other:?}"),
    }
}
