use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use creditvis::estimators::{
    covariate_design, dr_att, load_panel, placebo_gaps, synthetic_control, AttOptions, AttResult,
};
use creditvis::metrics::{build_report, transition_matrix, DecileStats, FiveNumber, LorenzCurve, TransitionMatrix};
use creditvis::population::{
    assign_deciles, generate_population, load_population, read_population, write_population, Deciles, Household,
};
use creditvis::regimes::{read_outcomes, simulate_regime, write_outcomes, HouseholdOutcome, RegimeKind, ScoringParams};
use creditvis::Error as CoreError;
use serde::Serialize;
use tempfile::NamedTempFile;

use crate::bundle::{sha256_hex, verify_bundle, Manifest, Staging};
use crate::config::{PopulationSource, ScenarioConfig};

pub const CONFIG_FILE: &str = "config.json";
pub const POPULATION_FILE: &str = "population.csv";
pub const TRANSITION_FILE: &str = "transition_baseline_vs_scoreplus.csv";

pub fn outcomes_file(r: RegimeKind) -> String {
    format!("outcomes_{r}.csv")
}

fn manifest(command: &str, cfg: &ScenarioConfig, inputs: BTreeMap<String, String>) -> Manifest {
    Manifest {
        command: command.into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        seeds: cfg.seeds(),
        inputs,
        files: BTreeMap::new(),
    }
}

/// Loads or generates the configured population; CSV inputs are checksummed.
fn population(cfg: &ScenarioConfig) -> Result<(Vec<Household>, BTreeMap<String, String>)> {
    let mut inputs = BTreeMap::new();
    let pop = match &cfg.population {
        PopulationSource::Generate(g) => generate_population(g)?,
        PopulationSource::Csv(path) => {
            let path = cfg.resolve(path);
            let bytes = fs::read(&path).with_context(|| format!("cannot read population {}", path.display()))?;
            inputs.insert("population".into(), sha256_hex(&bytes));
            load_population(&path)?
        }
    };
    Ok((pop, inputs))
}

fn population_csv(pop: &[Household]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_population(&mut buf, pop)?;
    Ok(buf)
}

/// Writes the population CSV to `out` (default `<output_dir>/population.csv`)
/// and returns the path and row count.
pub fn cmd_generate(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<(PathBuf, usize)> {
    cfg.validate()?;
    let PopulationSource::Generate(_) = &cfg.population else {
        bail!("`generate` needs a `population.generate` section in the config");
    };
    let (pop, _) = population(cfg)?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_root().join(POPULATION_FILE));
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let tmp = NamedTempFile::new_in(&parent)?;
    fs::write(tmp.path(), population_csv(&pop)?)?;
    tmp.persist(&target)
        .with_context(|| format!("cannot write {}", target.display()))?;
    Ok((target, pop.len()))
}

fn csv_number(x: f64) -> String {
    format!("{x}")
}

fn lorenz_csv(curve: &LorenzCurve) -> String {
    let mut s = String::from("population_share,burden_share\n");
    for &(p, l) in &curve.points {
        let _ = writeln!(s, "{},{}", csv_number(p), csv_number(l));
    }
    s
}

fn decile_csv(stats: &[DecileStats]) -> String {
    let mut s = String::from("decile,households");
    for prefix in ["burden", "psi_gain"] {
        for q in ["min", "q1", "median", "q3", "max"] {
            let _ = write!(s, ",{prefix}_{q}");
        }
    }
    s.push('\n');
    let cells = |f: &Option<FiveNumber>| -> String {
        match f {
            Some(f) => [f.min, f.q1, f.median, f.q3, f.max].map(csv_number).join(","),
            None => ",,,,".into(),
        }
    };
    for d in stats {
        let _ = writeln!(s, "{},{},{},{}", d.decile, d.households, cells(&d.burden), cells(&d.psi_gain));
    }
    s
}

fn transition_csv(m: &TransitionMatrix) -> String {
    let status = ["non_poor", "poor"];
    let mut s = String::from("baseline_status,scoreplus_status,households,weight\n");
    for (i, from) in status.iter().enumerate() {
        for (j, to) in status.iter().enumerate() {
            let _ = writeln!(s, "{from},{to},{},{}", m.counts[i][j], csv_number(m.weighted[i][j]));
        }
    }
    s
}

/// Report JSON, Lorenz and decile files per regime, plus the transition
/// table when both baseline and Score+ outcomes are present.
fn emit_reports(
    stage: &mut Staging,
    runs: &BTreeMap<RegimeKind, Vec<HouseholdOutcome>>,
    pop: &[Household],
    deciles: &Deciles,
    params: &ScoringParams,
) -> Result<()> {
    for (regime, outcomes) in runs {
        let report = build_report(outcomes, pop, deciles, params)?;
        stage.write_json(&format!("report_{regime}.json"), &report)?;
        stage.write(&format!("lorenz_{regime}.csv"), lorenz_csv(&report.lorenz_burden).as_bytes())?;
        stage.write(&format!("decile_stats_{regime}.csv"), decile_csv(&report.decile_stats).as_bytes())?;
    }
    if let (Some(base), Some(plus)) = (runs.get(&RegimeKind::Baseline), runs.get(&RegimeKind::ScorePlus)) {
        let m = transition_matrix(base, plus, pop)?;
        stage.write(TRANSITION_FILE, transition_csv(&m).as_bytes())?;
    }
    Ok(())
}

fn simulate_all(
    cfg: &ScenarioConfig,
    pop: &[Household],
    regimes: &[RegimeKind],
) -> Result<BTreeMap<RegimeKind, Vec<HouseholdOutcome>>> {
    regimes
        .iter()
        .map(|&r| Ok((r, simulate_regime(pop, r, &cfg.scoring)?)))
        .collect()
}

/// Full simulation bundle (default `<output_dir>/simulate`).
pub fn cmd_simulate(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<PathBuf> {
    cfg.validate()?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_root().join("simulate"));
    let (pop, inputs) = population(cfg)?;
    let deciles = assign_deciles(&pop)?;
    let runs = simulate_all(cfg, &pop, &cfg.regimes)?;

    let mut stage = Staging::new(&target)?;
    stage.write_json(CONFIG_FILE, cfg)?;
    stage.write(POPULATION_FILE, &population_csv(&pop)?)?;
    for (regime, outcomes) in &runs {
        let mut buf = Vec::new();
        write_outcomes(&mut buf, outcomes)?;
        stage.write(&outcomes_file(*regime), &buf)?;
    }
    emit_reports(&mut stage, &runs, &pop, &deciles, &cfg.scoring)?;
    stage.commit(manifest("simulate", cfg, inputs))
}

/// Re-derives the report files of a verified simulation bundle from its
/// stored population and outcome CSVs into `out`.
pub fn cmd_report(bundle: &Path, regimes: Option<&[RegimeKind]>, out: &Path) -> Result<PathBuf> {
    let source = verify_bundle(bundle).with_context(|| format!("bundle {}", bundle.display()))?;
    let text = fs::read_to_string(bundle.join(CONFIG_FILE))?;
    let mut cfg = ScenarioConfig::from_json(&text, bundle)?;
    if let Some(r) = regimes {
        cfg.regimes = r.to_vec();
    }
    cfg.validate()?;

    let pop_path = bundle.join(POPULATION_FILE);
    let pop = read_population(fs::File::open(&pop_path)?, &pop_path)?;
    let deciles = assign_deciles(&pop)?;
    let mut runs = BTreeMap::new();
    let mut inputs = BTreeMap::new();
    inputs.insert("population".to_string(), source.files[POPULATION_FILE].clone());
    for &regime in &cfg.regimes {
        let name = outcomes_file(regime);
        let Some(sum) = source.files.get(&name) else {
            bail!("bundle {} has no {name}", bundle.display());
        };
        let outcomes = read_outcomes(fs::File::open(bundle.join(&name))?)?;
        ensure!(
            outcomes.iter().all(|o| o.regime == regime),
            "{name} holds outcomes of another regime"
        );
        inputs.insert(name, sum.clone());
        runs.insert(regime, outcomes);
    }

    let mut stage = Staging::new(out)?;
    stage.write_json(CONFIG_FILE, &cfg)?;
    emit_reports(&mut stage, &runs, &pop, &deciles, &cfg.scoring)?;
    stage.commit(manifest("report", &cfg, inputs))
}

#[derive(Debug, Serialize)]
pub struct AttReport {
    pub treatment: &'static str,
    pub outcome: &'static str,
    pub covariates: Vec<String>,
    pub estimate: AttResult,
    /// `att / se`; absent when the bootstrap spread is zero.
    pub z: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PeriodGap {
    pub period: i64,
    pub gap: f64,
}

#[derive(Debug, Serialize)]
pub struct DonorWeight {
    pub unit: String,
    pub weight: f64,
}

#[derive(Debug, Serialize)]
pub struct PlaceboSummary {
    pub unit: String,
    pub pre_rmse: f64,
    pub post_rmse: f64,
    pub mean_post_gap: f64,
    pub gaps: Vec<PeriodGap>,
}

#[derive(Debug, Serialize)]
pub struct SynthReport {
    pub treated_unit: String,
    pub first_post_period: i64,
    pub weights: Vec<DonorWeight>,
    pub pre_rmse: f64,
    pub post_rmse: f64,
    pub mean_post_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gaps: Vec<PeriodGap>,
    pub placebo: Vec<PlaceboSummary>,
    /// Share of units, treated included, whose post/pre RMSE ratio is at
    /// least the treated unit's. `None` without a placebo distribution.
    pub placebo_p_value: Option<f64>,
}

#[derive(Debug)]
pub struct EstimateOutcome {
    pub dir: PathBuf,
    pub att: Option<AttReport>,
    pub synth: Option<SynthReport>,
}

fn rmse(gaps: &[f64], idx: &[usize]) -> f64 {
    (idx.iter().map(|&i| gaps[i] * gaps[i]).sum::<f64>() / idx.len() as f64).sqrt()
}

fn mean_at(gaps: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| gaps[i]).sum::<f64>() / idx.len() as f64
}

fn estimate_att(cfg: &ScenarioConfig, pop: &[Household]) -> Result<AttReport> {
    let deciles = assign_deciles(pop)?;
    let base = simulate_regime(pop, RegimeKind::Baseline, &cfg.scoring)?;
    let plus = simulate_regime(pop, RegimeKind::ScorePlus, &cfg.scoring)?;
    let t: Vec<u8> = plus.iter().map(|o| o.positive_data).collect();
    let y: Vec<f64> = plus.iter().zip(&base).map(|(p, b)| p.burden - b.burden).collect();
    let x = covariate_design(pop, &deciles)?;
    let opts = AttOptions {
        bootstrap_reps: cfg.estimator.bootstrap_reps,
        seed: cfg.seeds().bootstrap,
        propensity_clip: cfg.estimator.propensity_clip,
    };
    let estimate = dr_att(&x, &t, &y, &opts)?;
    let z = (estimate.se > 0.0).then(|| estimate.att / estimate.se);
    Ok(AttReport {
        treatment: "positive_data under scoreplus",
        outcome: "burden_scoreplus - burden_baseline",
        covariates: x.labels().to_vec(),
        estimate,
        z,
    })
}

fn estimate_synth(cfg: &ScenarioConfig, inputs: &mut BTreeMap<String, String>) -> Result<Option<SynthReport>> {
    let Some(pc) = &cfg.estimator.panel else {
        return Ok(None);
    };
    let path = cfg.resolve(&pc.path);
    let bytes = fs::read(&path).with_context(|| format!("cannot read panel {}", path.display()))?;
    inputs.insert("panel".into(), sha256_hex(&bytes));
    let panel = load_panel(&path)?;
    let Some(treated) = panel.unit_index(&pc.treated_unit) else {
        bail!("treated unit `{}` not in panel", pc.treated_unit);
    };
    let pre = panel.pre_periods(pc.first_post_period);
    let post: Vec<usize> = (pre.len()..panel.periods.len()).collect();
    ensure!(!pre.is_empty(), "no pre-treatment periods before {}", pc.first_post_period);
    ensure!(!post.is_empty(), "no post-treatment periods from {}", pc.first_post_period);

    let donor_idx: Vec<usize> = (0..panel.units.len()).filter(|&i| i != treated).collect();
    let donors: Vec<Vec<f64>> = donor_idx.iter().map(|&i| panel.values[i].clone()).collect();
    let fit = synthetic_control(&panel.values[treated], &donors, &pre)?;
    let gaps_of = |g: &[f64]| -> Vec<PeriodGap> {
        panel
            .periods
            .iter()
            .zip(g)
            .map(|(&period, &gap)| PeriodGap { period, gap })
            .collect()
    };

    let placebo = match placebo_gaps(&donors, &pre) {
        Ok(runs) => runs
            .into_iter()
            .map(|r| PlaceboSummary {
                unit: panel.units[donor_idx[r.unit]].clone(),
                pre_rmse: r.pre_rmse,
                post_rmse: rmse(&r.gaps, &post),
                mean_post_gap: mean_at(&r.gaps, &post),
                gaps: gaps_of(&r.gaps),
            })
            .collect(),
        Err(CoreError::InsufficientPool { .. }) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let post_rmse = rmse(&fit.gaps, &post);
    let ratio = |post: f64, pre: f64| if pre > 0.0 { post / pre } else { f64::INFINITY };
    let treated_ratio = ratio(post_rmse, fit.pre_rmse);
    let placebo_p_value = (!placebo.is_empty()).then(|| {
        let at_least = placebo
            .iter()
            .filter(|p| ratio(p.post_rmse, p.pre_rmse) >= treated_ratio)
            .count();
        (at_least + 1) as f64 / (placebo.len() + 1) as f64
    });

    Ok(Some(SynthReport {
        treated_unit: pc.treated_unit.clone(),
        first_post_period: pc.first_post_period,
        weights: donor_idx
            .iter()
            .zip(&fit.weights)
            .map(|(&i, &weight)| DonorWeight {
                unit: panel.units[i].clone(),
                weight,
            })
            .collect(),
        pre_rmse: fit.pre_rmse,
        post_rmse,
        mean_post_gap: mean_at(&fit.gaps, &post),
        iterations: fit.iterations,
        converged: fit.converged,
        gaps: gaps_of(&fit.gaps),
        placebo,
        placebo_p_value,
    }))
}

/// Doubly-robust ATT of Score+ visibility on burden (`att.json`) and, when a
/// panel is configured, the synthetic-control fit (`synth.json`). Default
/// output `<output_dir>/estimate`.
pub fn cmd_estimate(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<EstimateOutcome> {
    cfg.validate()?;
    let target = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_root().join("estimate"));
    let (pop, mut inputs) = population(cfg)?;
    let att = if cfg.estimator.att {
        Some(estimate_att(cfg, &pop)?)
    } else {
        None
    };
    let synth = estimate_synth(cfg, &mut inputs)?;
    if synth.is_none() {
        eprintln!("notice: no panel configured; synthetic control skipped");
    }

    let mut stage = Staging::new(&target)?;
    stage.write_json(CONFIG_FILE, cfg)?;
    if let Some(a) = &att {
        stage.write_json("att.json", a)?;
    }
    if let Some(s) = &synth {
        stage.write_json("synth.json", s)?;
    }
    let dir = stage.commit(manifest("estimate", cfg, inputs))?;
    Ok(EstimateOutcome { dir, att, synth })
}
