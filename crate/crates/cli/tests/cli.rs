use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use creditvis::par::with_threads;
use creditvis::population::{assign_deciles, load_population, BehaviorByDecile, DECILES};
use creditvis::regimes::{read_outcomes, RegimeKind};
use creditvis_cli::{cmd_estimate, cmd_generate, cmd_report, cmd_simulate, verify_bundle, ScenarioConfig};
use tempfile::TempDir;

fn scenario(dir: &Path, json: &str) -> ScenarioConfig {
    let path = dir.join("scenario.json");
    fs::write(&path, json).unwrap();
    ScenarioConfig::load(&path).unwrap()
}

fn small(n: usize) -> String {
    format!(r#"{{"population": {{"generate": {{"n": {n}, "seed": 9}}}}, "estimator": {{"bootstrap_reps": 50}}}}"#)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn committed_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

#[test]
fn generate_writes_requested_rows_reproducibly() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), &small(20));
    let (a, rows) = cmd_generate(&cfg, Some(&tmp.path().join("a.csv"))).unwrap();
    let (b, _) = cmd_generate(&cfg, Some(&tmp.path().join("b.csv"))).unwrap();
    assert_eq!(rows, 20);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 21);
    assert!(text.starts_with("id,income,size,region,"));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn generated_behavior_matches_configured_prevalence() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), r#"{"population": {"generate": {}}}"#);
    let (path, _) = cmd_generate(&cfg, None).unwrap();
    assert_eq!(path, tmp.path().join("output/population.csv"));
    let pop = load_population(&path).unwrap();
    let deciles = assign_deciles(&pop).unwrap();
    let expect = BehaviorByDecile::default();
    let mut tally = [[0usize; 4]; DECILES];
    for h in &pop {
        let d = usize::from(deciles.get(h.id).unwrap()) - 1;
        tally[d][0] += 1;
        tally[d][1] += usize::from(h.on_time_12m);
        tally[d][2] += usize::from(h.multi_product);
        tally[d][3] += usize::from(h.negative_flag);
    }
    for (d, t) in tally.iter().enumerate() {
        let n = t[0] as f64;
        for (k, p) in [expect.on_time_12m[d], expect.multi_product[d], expect.negative_flag[d]].iter().enumerate() {
            let got = t[k + 1] as f64 / n;
            assert!((got - p).abs() <= 0.03, "decile {} behavior {k}: {got} vs {p}", d + 1);
        }
    }
}

#[test]
fn generate_requires_a_generator_section() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), r#"{"population": {"csv": "pop.csv"}}"#);
    assert!(cmd_generate(&cfg, None).is_err());
}

#[test]
fn simulate_bundle_is_complete_and_self_verifying() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), &small(400));
    let dir = cmd_simulate(&cfg, None).unwrap();
    assert_eq!(dir, tmp.path().join("output/simulate"));
    let manifest = verify_bundle(&dir).unwrap();
    assert_eq!(manifest.config_hash, cfg.hash());
    for r in RegimeKind::ALL {
        for name in [
            format!("outcomes_{r}.csv"),
            format!("report_{r}.json"),
            format!("lorenz_{r}.csv"),
            format!("decile_stats_{r}.csv"),
        ] {
            assert!(manifest.files.contains_key(&name), "missing {name}");
        }
        let outcomes = read_outcomes(fs::File::open(dir.join(format!("outcomes_{r}.csv"))).unwrap()).unwrap();
        assert_eq!(outcomes.len(), 400);
        assert!(outcomes.iter().all(|o| o.regime == r));
    }
    assert!(manifest.files.contains_key("transition_baseline_vs_scoreplus.csv"));
    let names: Vec<String> = read_dir_sorted(&dir).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names.len(), manifest.files.len() + 1);
    // the staging directory is gone
    assert_eq!(fs::read_dir(tmp.path().join("output")).unwrap().count(), 1);
}

#[test]
fn reruns_and_thread_counts_give_identical_bundles() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), &small(1_500));
    let a = cmd_simulate(&cfg, Some(&tmp.path().join("a"))).unwrap();
    let b = cmd_simulate(&cfg, Some(&tmp.path().join("b"))).unwrap();
    let c = with_threads(3, || cmd_simulate(&cfg, Some(&tmp.path().join("c")))).unwrap();
    let reference = read_dir_sorted(&a);
    assert_eq!(reference, read_dir_sorted(&b));
    assert_eq!(reference, read_dir_sorted(&c));
    // rerunning into an existing bundle replaces it
    cmd_simulate(&cfg, Some(&a)).unwrap();
    assert_eq!(reference, read_dir_sorted(&a));
}

#[test]
fn seed_override_changes_outputs_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), &small(200));
    let mut other = cfg.clone();
    other.apply_seed(77);
    let a = verify_bundle(&cmd_simulate(&cfg, Some(&tmp.path().join("a"))).unwrap()).unwrap();
    let b = verify_bundle(&cmd_simulate(&other, Some(&tmp.path().join("b"))).unwrap()).unwrap();
    assert_eq!(b.seed, Some(77));
    assert_ne!(a.config_hash, b.config_hash);
    assert_ne!(a.files["outcomes_baseline.csv"], b.files["outcomes_baseline.csv"]);
}

#[test]
fn invalid_config_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(
        tmp.path(),
        r#"{"population": {"generate": {"n": 50}}, "scoring": {"gamma": 0.9}}"#,
    );
    assert!(cmd_simulate(&cfg, None).is_err());
    assert!(cmd_estimate(&cfg, None).is_err());
    assert!(cmd_generate(&cfg, None).is_err());
    assert!(!tmp.path().join("output").exists());
}

#[test]
fn regime_subset_omits_cross_regime_table() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = scenario(tmp.path(), &small(100));
    cfg.regimes = vec![RegimeKind::Baseline, RegimeKind::OpenFinance];
    let m = verify_bundle(&cmd_simulate(&cfg, None).unwrap()).unwrap();
    assert!(m.files.contains_key("outcomes_openfinance.csv"));
    assert!(!m.files.contains_key("outcomes_scoreplus.csv"));
    assert!(!m.files.contains_key("transition_baseline_vs_scoreplus.csv"));
}

#[test]
fn report_rebuilds_simulation_reports_exactly() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), &small(800));
    let sim = cmd_simulate(&cfg, None).unwrap();
    let rep = cmd_report(&sim, None, &tmp.path().join("rep")).unwrap();
    let rebuilt = read_dir_sorted(&rep);
    let original: std::collections::BTreeMap<String, Vec<u8>> = read_dir_sorted(&sim).into_iter().collect();
    let mut compared = 0;
    for (name, bytes) in &rebuilt {
        if name == "manifest.json" {
            continue;
        }
        assert!(Some(bytes) == original.get(name), "{name} differs");
        compared += 1;
    }
    assert_eq!(compared, 1 + 3 * 3 + 1);
}

#[test]
fn report_refuses_tampered_bundle() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), &small(100));
    let sim = cmd_simulate(&cfg, None).unwrap();
    let path = sim.join("outcomes_scoreplus.csv");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push('\n');
    fs::write(&path, text).unwrap();
    assert!(cmd_report(&sim, None, &tmp.path().join("rep")).is_err());
    assert!(!tmp.path().join("rep").exists());
}

#[test]
fn estimate_reports_negative_effect_and_skips_missing_panel() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(tmp.path(), &small(3_000));
    let out = cmd_estimate(&cfg, None).unwrap();
    assert!(out.synth.is_none());
    assert!(!out.dir.join("synth.json").exists());
    let att = out.att.unwrap().estimate;
    assert!(att.att < 0.0);
    assert!(att.att.abs() > 2.0 * att.se, "{} vs se {}", att.att, att.se);
    let json: serde_json::Value = serde_json::from_slice(&fs::read(out.dir.join("att.json")).unwrap()).unwrap();
    assert_eq!(json["estimate"]["att"].as_f64(), Some(att.att));
}

#[test]
fn estimate_null_effect_when_uplift_carries_no_visibility() {
    let tmp = TempDir::new().unwrap();
    let cfg = scenario(
        tmp.path(),
        r#"{"population": {"generate": {"n": 2000}}, "scoring": {"beta": [0.0, 0.0, 0.5]},
            "estimator": {"bootstrap_reps": 50}}"#,
    );
    let att = cmd_estimate(&cfg, None).unwrap().att.unwrap().estimate;
    assert!(att.att.abs() <= 2.0 * att.se);
    assert_eq!(att.att, 0.0);
}

#[test]
fn estimate_with_committed_panel_writes_synth_bundle() {
    let mut cfg = ScenarioConfig::load(committed_config("reference.json")).unwrap();
    let tmp = TempDir::new().unwrap();
    cfg.estimator.att = false;
    let out = cmd_estimate(&cfg, Some(&tmp.path().join("est"))).unwrap();
    let synth = out.synth.unwrap();
    assert!(synth.converged);
    let total: f64 = synth.weights.iter().map(|w| w.weight).sum();
    assert!((total - 1.0).abs() < 1e-8);
    assert_eq!(synth.placebo.len(), synth.weights.len());
    assert!(synth.mean_post_gap < 0.0);
    let m = verify_bundle(&out.dir).unwrap();
    assert!(m.files.contains_key("synth.json"));
    assert!(m.inputs.contains_key("panel"));
}

#[test]
fn csv_population_source_is_checksummed() {
    let tmp = TempDir::new().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/pop_small.csv");
    fs::copy(&fixture, tmp.path().join("pop.csv")).unwrap();
    let cfg = scenario(tmp.path(), r#"{"population": {"csv": "pop.csv"}, "estimator": {"att": false}}"#);
    let m = verify_bundle(&cmd_simulate(&cfg, None).unwrap()).unwrap();
    assert!(m.inputs.contains_key("population"));
    assert_eq!(m.seeds.population, None);
}

#[test]
fn binary_exit_codes_follow_success() {
    let exe = env!("CARGO_BIN_EXE_creditvis");
    let tmp = TempDir::new().unwrap();
    let good = tmp.path().join("good.json");
    fs::write(&good, small(60)).unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"population": {"generate": {"n": 60}}, "scoring": {"poverty_line": 100, "indigence_line": 200}}"#).unwrap();

    let ok = Command::new(exe)
        .args(["simulate", "--config", good.to_str().unwrap(), "--regimes", "baseline,scoreplus", "--threads", "2"])
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    let m = verify_bundle(&tmp.path().join("output/simulate")).unwrap();
    assert!(!m.files.contains_key("outcomes_openfinance.csv"));

    let fail = Command::new(exe).args(["simulate", "--config", bad.to_str().unwrap(), "--out"]).arg(tmp.path().join("x")).output().unwrap();
    assert!(!fail.status.success());
    assert!(!tmp.path().join("x").exists());

    let rep = Command::new(exe)
        .args(["report", "--config", good.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(rep.status.success(), "{}", String::from_utf8_lossy(&rep.stderr));
    assert!(tmp.path().join("output/report/report_scoreplus.json").exists());

    let est = Command::new(exe)
        .args(["estimate", "--config", good.to_str().unwrap(), "--seed", "5"])
        .output()
        .unwrap();
    assert!(est.status.success());
    assert!(String::from_utf8_lossy(&est.stderr).contains("synthetic control skipped"));
}
