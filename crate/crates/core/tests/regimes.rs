#![allow(clippy::needless_range_loop)]
use creditvis::par::Execution;
use creditvis::population::{generate_population, Household, PopulationConfig};
use creditvis::regimes::{assign_debt, simulate_regime, simulate_regime_with, RegimeKind, ScoringParams, Tier, UpliftRule};
use proptest::prelude::*;

fn population(n: usize, seed: u64) -> Vec<Household> {
    generate_population(&PopulationConfig {
        n,
        seed,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn lognormal_debt_median() {
    // Households outside the uplift rule carry the unshifted distribution.
    let p = ScoringParams::default();
    let mut ratios: Vec<f64> = population(30_000, 3)
        .iter()
        .filter(|h| !p.uplift_rule.admits(h))
        .take(10_000)
        .map(|h| assign_debt(h, &p) / (12.0 * h.income))
        .collect();
    assert_eq!(ratios.len(), 10_000);
    ratios.sort_by(f64::total_cmp);
    let median = 0.5 * (ratios[4_999] + ratios[5_000]);
    assert!((median - 0.25).abs() < 0.02, "median {median}");

    let flat = ScoringParams {
        engaged_debt_multiplier: 1.0,
        ..p
    };
    let pop = population(10_000, 4);
    let mut all: Vec<f64> = pop.iter().map(|h| assign_debt(h, &flat) / (12.0 * h.income)).collect();
    all.sort_by(f64::total_cmp);
    assert!((0.5 * (all[4_999] + all[5_000]) - 0.25).abs() < 0.02);
}

#[test]
fn structure_is_regime_invariant() {
    let pop = population(3_000, 11);
    let p = ScoringParams::default();
    let runs: Vec<_> = RegimeKind::ALL
        .iter()
        .map(|&r| simulate_regime(&pop, r, &p).unwrap())
        .collect();
    for i in 0..pop.len() {
        let (b, s, o) = (&runs[0][i], &runs[1][i], &runs[2][i]);
        assert_eq!(b.phi, s.phi);
        assert_eq!(b.phi, o.phi);
        assert_eq!(b.eligible, s.eligible);
        assert_eq!(b.debt, s.debt);
        assert_eq!(b.debt, o.debt);
        assert!(b.rate >= s.rate && s.rate >= o.rate);
        assert!(b.burden >= s.burden && s.burden >= o.burden);
        if !b.eligible {
            assert_eq!((b.burden, s.burden, o.burden), (0.0, 0.0, 0.0));
        }
        assert_eq!(b.tier, Tier::Low);
        assert_eq!(s.tier == Tier::Medium, p.uplift_rule.admits(&pop[i]));
        assert_eq!(o.tier, Tier::High);
        for x in [b, s, o] {
            assert!(!x.indigent || x.poor);
            assert!(!x.eligible || x.rate > 0.0);
        }
    }
}

#[test]
fn uplift_eligible_burden_strictly_ordered() {
    let pop = population(2_000, 12);
    let p = ScoringParams::default();
    let runs: Vec<_> = RegimeKind::ALL
        .iter()
        .map(|&r| simulate_regime(&pop, r, &p).unwrap())
        .collect();
    let mut seen = 0;
    for i in 0..pop.len() {
        if runs[0][i].eligible && p.uplift_rule.admits(&pop[i]) && runs[0][i].debt > 0.0 {
            assert!(runs[2][i].burden < runs[1][i].burden && runs[1][i].burden < runs[0][i].burden);
            seen += 1;
        }
    }
    assert!(seen > 100);
}

#[test]
fn gamma_zero_collapses_every_regime() {
    let pop = population(1_000, 13);
    let p = ScoringParams {
        gamma: 0.0,
        ..Default::default()
    };
    let base = simulate_regime(&pop, RegimeKind::Baseline, &p).unwrap();
    for regime in [RegimeKind::ScorePlus, RegimeKind::OpenFinance] {
        let other = simulate_regime(&pop, regime, &p).unwrap();
        for (a, b) in base.iter().zip(&other) {
            assert_eq!(a.rate, b.rate);
            assert_eq!(a.burden, b.burden);
            assert_eq!(a.poor, b.poor);
            assert!(!a.eligible || a.rate == p.r_bar);
        }
    }
}

#[test]
fn execution_mode_does_not_change_outcomes() {
    let pop = population(2_500, 14);
    let p = ScoringParams::default();
    let a = simulate_regime_with(&pop, RegimeKind::ScorePlus, &p, Execution::Sequential).unwrap();
    let b = simulate_regime_with(&pop, RegimeKind::ScorePlus, &p, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn invalid_params_are_rejected_before_simulating() {
    let pop = population(10, 1);
    let p = ScoringParams {
        gamma: 0.8,
        ..Default::default()
    };
    assert!(simulate_regime(&pop, RegimeKind::Baseline, &p).is_err());
}

proptest! {
    #[test]
    fn pricing_monotone_in_visibility(gamma in 0.0f64..0.66, b1 in 0.0f64..1.0, b2 in 0.0f64..0.5, seed in 0u64..1000) {
        let p = ScoringParams { gamma, beta: [0.0, b1, b2], seed, uplift_rule: UpliftRule::Any, ..Default::default() };
        prop_assume!(p.validate().is_ok());
        let pop = population(50, seed);
        let runs: Vec<_> = RegimeKind::ALL.iter().map(|&r| simulate_regime(&pop, r, &p).unwrap()).collect();
        for i in 0..pop.len() {
            prop_assert!(runs[0][i].rate >= runs[1][i].rate);
            prop_assert!(runs[1][i].rate >= runs[2][i].rate);
            prop_assert!(runs[0][i].net_income_pc <= runs[2][i].net_income_pc);
        }
    }
}
