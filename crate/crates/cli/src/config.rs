//! Scenario configuration: one JSON document fully determines a run.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use creditvis::estimators::DEFAULT_CLIP;
use creditvis::population::PopulationConfig;
use creditvis::regimes::{RegimeKind, ScoringParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[allow(clippy::large_enum_variant)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PopulationSource {
    /// Synthetic population from the generator.
    Generate(PopulationConfig),
    /// Population CSV, relative to the config file.
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelConfig {
    /// Long-format `unit,period,value` CSV, relative to the config file.
    pub path: PathBuf,
    pub treated_unit: String,
    pub first_post_period: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub att: bool,
    pub bootstrap_reps: usize,
    pub propensity_clip: f64,
    pub panel: Option<PanelConfig>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            att: true,
            bootstrap_reps: 500,
            propensity_clip: DEFAULT_CLIP,
            panel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub population: PopulationSource,
    #[serde(default)]
    pub scoring: ScoringParams,
    #[serde(default = "all_regimes")]
    pub regimes: Vec<RegimeKind>,
    /// Root of all command outputs, relative to the config file.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Master seed. When set it replaces the generator, debt and bootstrap seeds.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn all_regimes() -> Vec<RegimeKind> {
    RegimeKind::ALL.to_vec()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

/// Seeds actually used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub population: Option<u64>,
    pub debt: u64,
    pub bootstrap: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ScenarioConfig = serde_json::from_str(text).context("invalid scenario config")?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base).with_context(|| format!("in {}", path.display()))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_root(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Applies the master seed, if any, to every seeded component.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let PopulationSource::Generate(g) = &mut self.population {
            g.seed = seed;
        }
        self.scoring.seed = seed;
    }

    pub fn seeds(&self) -> Seeds {
        Seeds {
            population: match &self.population {
                PopulationSource::Generate(g) => Some(g.seed),
                PopulationSource::Csv(_) => None,
            },
            debt: self.scoring.seed,
            bootstrap: self.seed.unwrap_or(self.scoring.seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PopulationSource::Generate(g) = &self.population {
            g.validate().context("population generator")?;
        }
        self.scoring.validate().context("scoring parameters")?;
        ensure!(!self.regimes.is_empty(), "regime list is empty");
        let distinct: BTreeSet<_> = self.regimes.iter().collect();
        ensure!(distinct.len() == self.regimes.len(), "regime list has duplicates");
        let e = &self.estimator;
        ensure!(
            e.propensity_clip > 0.0 && e.propensity_clip < 0.5,
            "propensity_clip must lie in (0, 0.5), got {}",
            e.propensity_clip
        );
        if e.att && e.bootstrap_reps == 1 {
            bail!("bootstrap_reps must be 0 or at least 2");
        }
        if let Some(panel) = &e.panel {
            ensure!(!panel.treated_unit.is_empty(), "panel treated_unit is empty");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output_dir");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }
}
