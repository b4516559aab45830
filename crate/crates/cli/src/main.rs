use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use creditvis::par::with_threads;
use creditvis::regimes::RegimeKind;
use creditvis_cli::{cmd_estimate, cmd_generate, cmd_report, cmd_simulate, ScenarioConfig};

/// Counterfactual credit-visibility microsimulation.
#[derive(Parser)]
#[command(name = "creditvis", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic population CSV.
    Generate(Common),
    /// Simulate the regimes and write outcomes, reports and figure data.
    Simulate(Common),
    /// Estimate the Score+ ATT and, with a panel, the synthetic control.
    Estimate(Common),
    /// Rebuild reports from the outcome CSVs of a simulation bundle.
    Report {
        #[command(flatten)]
        common: Common,
        /// Simulation bundle to read (default `<output_dir>/simulate`).
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, or output file for `generate`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated regimes, e.g. `baseline,scoreplus`.
    #[arg(long, value_delimiter = ',')]
    regimes: Option<Vec<RegimeKind>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig> {
        let Some(path) = &self.config else {
            bail!("--config is required");
        };
        let mut cfg = ScenarioConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.apply_seed(seed);
        }
        if let Some(r) = &self.regimes {
            cfg.regimes = r.clone();
        }
        cfg.validate().context("invalid scenario config")?;
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(c) => {
            let (path, rows) = cmd_generate(&c.scenario()?, c.out.as_deref())?;
            println!("wrote {rows} households to {}", path.display());
        }
        Command::Simulate(c) => {
            let dir = cmd_simulate(&c.scenario()?, c.out.as_deref())?;
            println!("wrote simulation bundle {}", dir.display());
        }
        Command::Estimate(c) => {
            let result = cmd_estimate(&c.scenario()?, c.out.as_deref())?;
            if let Some(a) = &result.att {
                println!(
                    "ATT {:.6} (se {:.6}, {} treated, {} control)",
                    a.estimate.att, a.estimate.se, a.estimate.n_treated, a.estimate.n_control
                );
            }
            if let Some(s) = &result.synth {
                println!("synthetic control: pre-RMSE {:.6}, mean post gap {:.6}", s.pre_rmse, s.mean_post_gap);
            }
            println!("wrote estimation bundle {}", result.dir.display());
        }
        Command::Report { common, from } => {
            if common.seed.is_some() {
                bail!("--seed has no effect on `report`; outcomes come from the bundle");
            }
            let cfg = common.config.as_ref().map(ScenarioConfig::load).transpose()?;
            let bundle = match (&from, &cfg) {
                (Some(b), _) => b.clone(),
                (None, Some(cfg)) => cfg.output_root().join("simulate"),
                (None, None) => bail!("give --from <bundle> or --config"),
            };
            let out = match (&common.out, &cfg) {
                (Some(o), _) => o.clone(),
                (None, Some(cfg)) => cfg.output_root().join("report"),
                (None, None) => bundle.with_file_name("report"),
            };
            let dir = cmd_report(&bundle, common.regimes.as_deref(), &out)?;
            println!("wrote report bundle {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Generate(c) | Command::Simulate(c) | Command::Estimate(c) => c.threads,
        Command::Report { common, .. } => common.threads,
    };
    let result = match threads {
        Some(0) => Err(anyhow::anyhow!("--threads must be at least 1")),
        Some(n) => with_threads(n, || run(cli.command)),
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
