use creditvis::metrics::{gini, lorenz, poverty_rate, transition_matrix};
use creditvis::population::{generate_population, PopulationConfig};
use creditvis::regimes::{simulate_regime, RegimeKind, ScoringParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// O(n^2) pairwise mean-absolute-difference Gini.
fn pairwise_gini(x: &[f64], w: &[f64]) -> f64 {
    let total_w: f64 = w.iter().sum();
    let mu = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total_w;
    let mut acc = 0.0;
    for i in 0..x.len() {
        for j in 0..x.len() {
            acc += w[i] * w[j] * (x[i] - x[j]).abs();
        }
    }
    acc / (2.0 * total_w * total_w * mu)
}

fn random_vector(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(1..=200);
    let zero_share = rng.random::<f64>() * 0.5;
    let x: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < zero_share {
                0.0
            } else {
                rng.random::<f64>().powi(3) * 100.0
            }
        })
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
    (x, w)
}

#[test]
fn sorted_gini_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let (x, w) = random_vector(&mut rng);
        if x.iter().all(|&v| v == 0.0) {
            continue;
        }
        let fast = gini(&x, &w).unwrap();
        let slow = pairwise_gini(&x, &w);
        assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        let curve = lorenz(&x, &w).unwrap();
        assert!((curve.gini() - fast).abs() < 1e-9);
        checked += 1;
    }
}

fn arb_weighted() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..80).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1e3], n),
            prop::collection::vec(0.01f64..50.0, n),
        )
    })
}

proptest! {
    #[test]
    fn lorenz_invariants((x, w) in arb_weighted()) {
        prop_assume!(x.iter().any(|&v| v > 0.0));
        let c = lorenz(&x, &w).unwrap();
        prop_assert_eq!(c.points[0], (0.0, 0.0));
        prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
        for s in c.points.windows(2) {
            prop_assert!(s[1].0 >= s[0].0 && s[1].1 >= s[0].1);
        }
        for &(p, l) in &c.points {
            prop_assert!(l <= p + 1e-12);
        }
        let g = gini(&x, &w).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
        prop_assert!((c.gini() - g).abs() < 1e-9);
    }

    #[test]
    fn gini_scale_invariant((x, w) in arb_weighted(), c in 1e-3f64..1e3) {
        prop_assume!(x.iter().any(|&v| v > 0.0));
        let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
        prop_assert!((gini(&x, &w).unwrap() - gini(&scaled, &w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn gini_permutation_invariant((x, w) in arb_weighted(), rot in 0usize..80) {
        prop_assume!(x.iter().any(|&v| v > 0.0));
        let k = rot % x.len();
        let mut xr = x.clone();
        let mut wr = w.clone();
        xr.rotate_left(k);
        wr.rotate_left(k);
        xr.reverse();
        wr.reverse();
        prop_assert!((gini(&x, &w).unwrap() - gini(&xr, &wr).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn poverty_rate_monotone_in_line_and_transitions_partition() {
    let pop = generate_population(&PopulationConfig {
        n: 1_500,
        seed: 5,
        ..Default::default()
    })
    .unwrap();
    let p = ScoringParams::default();
    let base = simulate_regime(&pop, RegimeKind::Baseline, &p).unwrap();
    let plus = simulate_regime(&pop, RegimeKind::ScorePlus, &p).unwrap();
    let mut last = 0.0;
    for k in 0..=40 {
        let r = poverty_rate(&base, &pop, 1_000.0 * k as f64).unwrap();
        assert!(r >= last);
        last = r;
    }
    let m = transition_matrix(&base, &plus, &pop).unwrap();
    assert_eq!(m.total(), pop.len() as u64);
    let total_w: f64 = pop.iter().map(|h| h.weight).sum();
    let cells: f64 = m.weighted.iter().flatten().sum();
    assert!((cells - total_w).abs() < 1e-9 * total_w);

    let mut reversed_pop = pop.clone();
    let mut reversed_out = base.clone();
    reversed_pop.reverse();
    reversed_out.reverse();
    let a = poverty_rate(&base, &pop, p.poverty_line).unwrap();
    let b = poverty_rate(&reversed_out, &reversed_pop, p.poverty_line).unwrap();
    assert!((a - b).abs() < 1e-12);
}
