//! Prints headline metrics of the default scenario for every regime.

use creditvis::metrics::{build_report, transition_matrix};
use creditvis::population::{assign_deciles, generate_population, PopulationConfig};
use creditvis::regimes::{simulate_regime, RegimeKind, ScoringParams};

fn main() -> creditvis::Result<()> {
    let pop = generate_population(&PopulationConfig::default())?;
    let deciles = assign_deciles(&pop)?;
    let params = ScoringParams::default();
    let mut outcomes = Vec::new();
    println!("regime       mean_burden gini_burden gini_income poverty indigence mean_rate improved");
    for regime in RegimeKind::ALL {
        let out = simulate_regime(&pop, regime, &params)?;
        let r = build_report(&out, &pop, &deciles, &params)?;
        println!(
            "{:<12} {:>11.4} {:>11.4} {:>11.4} {:>7.4} {:>9.4} {:>9.4} {:>8.4}",
            regime.label(),
            r.mean_burden,
            r.gini_burden,
            r.gini_income,
            r.poverty_rate,
            r.indigence_rate,
            r.mean_rate.unwrap_or(f64::NAN),
            r.pct_improved
        );
        outcomes.push(out);
    }
    let m = transition_matrix(&outcomes[0], &outcomes[1], &pop)?;
    println!("transition baseline -> scoreplus: {:?}", m.counts);
    Ok(())
}
