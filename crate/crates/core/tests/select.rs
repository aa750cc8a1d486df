mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use sitesel::baselines::lipschitz_discrepancy;
use sitesel::ot::{DiscreteDistribution, Exponent};
use sitesel::select::{enumerate_oracle, lp_relax_and_round, select_sites, Selection, SolveMode};

fn exponent(p: u8) -> Exponent {
    Exponent::try_from(p).unwrap()
}

#[test]
fn exact_matches_enumeration() {
    for seed in 0..24u64 {
        let mut r = rng(seed);
        let n = r.gen_range(5..=10);
        let k = r.gen_range(2..=5.min(n - 1));
        let p = exponent(1 + (seed % 2) as u8);
        let table = gaussian_table(n, 2, 100 + seed);
        let (exact, report) = select_sites(&table, k, p, SolveMode::Exact).unwrap();
        let oracle = enumerate_oracle(&table, k, p).unwrap();
        assert!(report.optimal);
        assert!((exact.objective - oracle.objective).abs() < 1e-7, "seed {seed}");
        assert_eq!(exact.indices, oracle.indices, "seed {seed}");
    }
}

#[test]
fn six_site_cloud_pair_matches_enumeration() {
    let table = gaussian_table(6, 2, 42);
    let exact = select_sites(&table, 2, Exponent::One, SolveMode::Exact).unwrap().0;
    let oracle = enumerate_oracle(&table, 2, Exponent::One).unwrap();
    assert_eq!(exact.indices, oracle.indices);
    assert!((exact.objective - oracle.objective).abs() < 1e-7);
}

/// Uniform 1/K weights cannot reproduce a smaller budget's weights, so the
/// optimum need not improve as K grows. Selecting every site is always exact.
#[test]
fn objective_is_not_monotone_in_budget() {
    let table = gaussian_table(9, 3, 200);
    let objs: Vec<f64> = (1..=9).map(|k| select_sites(&table, k, Exponent::Two, SolveMode::Exact).unwrap().0.objective).collect();
    for (k, &v) in objs.iter().enumerate() {
        let oracle = enumerate_oracle(&table, k + 1, Exponent::Two).unwrap();
        assert!((v - oracle.objective).abs() < 1e-7, "k {}", k + 1);
    }
    assert!(objs[2] > objs[1] + 1e-3, "{objs:?}");
    for seed in 0..6u64 {
        let table = gaussian_table(9, 3, 200 + seed);
        for p in [Exponent::One, Exponent::Two] {
            assert!(select_sites(&table, 9, p, SolveMode::Exact).unwrap().0.objective.abs() < 1e-12);
        }
    }
}

#[test]
fn relaxation_bounds_exact_objective() {
    for seed in 0..10u64 {
        let table = gaussian_table(12, 2, 300 + seed);
        for p in [Exponent::One, Exponent::Two] {
            let exact = select_sites(&table, 4, p, SolveMode::Exact).unwrap().0;
            let (scores, rounded, report) = lp_relax_and_round(&table, 4, p).unwrap();
            let bound = report.relaxation_objective.unwrap();
            assert!(bound <= exact.objective + 1e-8, "seed {seed}: {bound} > {}", exact.objective);
            assert!(exact.objective <= rounded.objective + 1e-12);
            assert_eq!(scores.len(), 12);
            assert!(scores.iter().all(|&s| (-1e-9..=1.0 + 1e-9).contains(&s)));
            assert!((scores.iter().sum::<f64>() - 4.0).abs() < 1e-6);
        }
    }
}

#[test]
fn exact_p1_solution_bounds_lipschitz_discrepancy() {
    for seed in 0..20u64 {
        let table = gaussian_table(10, 2, 400 + seed);
        let sel = select_sites(&table, 3, Exponent::One, SolveMode::Exact).unwrap().0;
        let pop = DiscreteDistribution::uniform(10).unwrap();
        let s = DiscreteDistribution::uniform_on(sel.indices.clone()).unwrap();
        let d = lipschitz_discrepancy(&pop, &s, &table, 100, seed).unwrap();
        assert!(d <= sel.objective + 1e-8, "seed {seed}: {d} > {}", sel.objective);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn selections_are_well_formed(seed in 0u64..100_000, n in 1usize..12, kf in 0.0f64..1.0, p in 1u8..3, relaxed: bool) {
        let k = 1 + ((n - 1) as f64 * kf) as usize;
        let table = gaussian_table(n, 2, seed);
        let mode = if relaxed { SolveMode::Relaxed } else { SolveMode::Exact };
        let (sel, _) = select_sites(&table, k, exponent(p), mode).unwrap();
        prop_assert_eq!(sel.indices.len(), k);
        prop_assert_eq!(sel.budget, k);
        prop_assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(sel.indices.iter().all(|&i| i < n));
        prop_assert!(sel.objective >= 0.0);
        let again = Selection::evaluate(&table, sel.indices.clone(), exponent(p), "check").unwrap();
        prop_assert!((again.objective - sel.objective).abs() < 1e-9);
    }

    #[test]
    fn solves_are_deterministic(seed in 0u64..100_000) {
        let table = gaussian_table(10, 2, seed);
        let a = select_sites(&table, 3, Exponent::Two, SolveMode::Exact).unwrap().0;
        let b = select_sites(&table, 3, Exponent::Two, SolveMode::Exact).unwrap().0;
        prop_assert_eq!(a, b);
    }
}
