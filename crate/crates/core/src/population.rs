//! Household microdata: CSV ingestion, a calibrated synthetic generator and
//! weighted income deciles.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Beta, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::{stream, Domain};

/// Column order of the population CSV.
pub const POPULATION_COLUMNS: [&str; 14] = [
    "id",
    "income",
    "size",
    "region",
    "employed",
    "informal",
    "education",
    "age",
    "urban",
    "on_time_12m",
    "utilization",
    "multi_product",
    "negative_flag",
    "weight",
];

/// Region codes are `0..MAX_REGIONS`.
pub const MAX_REGIONS: u8 = 16;
pub const MIN_AGE: u32 = 15;
pub const MAX_AGE: u32 = 110;
pub const DECILES: usize = 10;

/// One survey record. Binary attributes are stored as `0`/`1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: u64,
    /// Monthly adjusted disposable income.
    pub income: f64,
    pub size: u32,
    pub region: u8,
    pub employed: u8,
    pub informal: u8,
    /// 0 none, 1 primary, 2 secondary, 3 tertiary.
    pub education: u8,
    pub age: u32,
    pub urban: u8,
    pub on_time_12m: u8,
    pub utilization: f64,
    pub multi_product: u8,
    pub negative_flag: u8,
    /// Survey expansion factor.
    pub weight: f64,
}

impl Household {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.income.is_finite() && self.income > 0.0) {
            return Err(format!("income must be finite and > 0, got {}", self.income));
        }
        if self.size < 1 {
            return Err("size must be >= 1".into());
        }
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(format!("weight must be finite and > 0, got {}", self.weight));
        }
        if !(0.0..=1.0).contains(&self.utilization) {
            return Err(format!("utilization must lie in [0,1], got {}", self.utilization));
        }
        if self.region >= MAX_REGIONS {
            return Err(format!("region must be < {MAX_REGIONS}, got {}", self.region));
        }
        if self.education > 3 {
            return Err(format!("education must be in 0..=3, got {}", self.education));
        }
        if !(MIN_AGE..=MAX_AGE).contains(&self.age) {
            return Err(format!("age must be in [{MIN_AGE},{MAX_AGE}], got {}", self.age));
        }
        for (name, v) in [
            ("employed", self.employed),
            ("informal", self.informal),
            ("urban", self.urban),
            ("on_time_12m", self.on_time_12m),
            ("multi_product", self.multi_product),
            ("negative_flag", self.negative_flag),
        ] {
            if v > 1 {
                return Err(format!("{name} must be 0 or 1, got {v}"));
            }
        }
        Ok(())
    }

    /// Person weight used for headcount statistics.
    pub fn person_weight(&self) -> f64 {
        self.weight * f64::from(self.size)
    }
}

pub fn per_capita_income(hh: &Household) -> f64 {
    hh.income / f64::from(hh.size)
}

pub fn load_population(path: impl AsRef<Path>) -> Result<Vec<Household>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Open {
        path: path.to_path_buf(),
        source,
    })?;
    read_population(file, path)
}

/// Parses a population CSV. `origin` only labels errors.
pub fn read_population<R: Read>(reader: R, origin: impl Into<PathBuf>) -> Result<Vec<Household>> {
    let origin = origin.into();
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Empty(origin));
    }
    check_header(&headers)?;

    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        let hh: Household = record.deserialize(Some(&headers)).map_err(|e| Error::Row {
            row,
            message: e.to_string(),
        })?;
        hh.validate().map_err(|message| Error::Row { row, message })?;
        if !seen.insert(hh.id) {
            return Err(Error::Row {
                row,
                message: format!("duplicate id {}", hh.id),
            });
        }
        out.push(hh);
    }
    if out.is_empty() {
        return Err(Error::Empty(origin));
    }
    Ok(out)
}

fn check_header(headers: &csv::StringRecord) -> Result<()> {
    for col in POPULATION_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::MissingColumn(col.to_string()));
        }
    }
    for h in headers.iter() {
        if !POPULATION_COLUMNS.contains(&h) {
            return Err(Error::UnknownColumn(h.to_string()));
        }
    }
    if headers.len() != POPULATION_COLUMNS.len() {
        // every expected column present and nothing unknown: a duplicate
        let dup = headers
            .iter()
            .find(|h| headers.iter().filter(|x| x == h).count() > 1)
            .unwrap_or_default();
        return Err(Error::UnknownColumn(format!("{dup} (duplicated)")));
    }
    for (found, h) in headers.iter().enumerate() {
        let expected = POPULATION_COLUMNS.iter().position(|c| *c == h).unwrap_or(found);
        if expected != found {
            return Err(Error::ColumnOrder {
                column: h.to_string(),
                found,
                expected,
            });
        }
    }
    Ok(())
}

pub fn write_population<W: Write>(writer: W, pop: &[Household]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for hh in pop {
        wtr.serialize(hh)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_population(path: impl AsRef<Path>, pop: &[Household]) -> Result<()> {
    write_population(File::create(path)?, pop)
}

/// Per-decile behavioral propensities. Utilization is Beta(a, b) per decile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorByDecile {
    pub on_time_12m: [f64; DECILES],
    pub multi_product: [f64; DECILES],
    pub negative_flag: [f64; DECILES],
    pub utilization_beta: [(f64, f64); DECILES],
}

impl Default for BehaviorByDecile {
    fn default() -> Self {
        // Positive-data prevalence peaks in deciles 3-6.
        BehaviorByDecile {
            on_time_12m: [0.30, 0.40, 0.65, 0.72, 0.72, 0.66, 0.55, 0.50, 0.45, 0.42],
            multi_product: [0.10, 0.15, 0.35, 0.40, 0.40, 0.38, 0.30, 0.28, 0.25, 0.25],
            negative_flag: [0.30, 0.25, 0.15, 0.12, 0.10, 0.08, 0.06, 0.05, 0.04, 0.03],
            utilization_beta: [
                (4.0, 3.0),
                (3.5, 3.5),
                (2.0, 4.0),
                (2.0, 4.5),
                (2.0, 4.5),
                (2.0, 4.0),
                (2.5, 4.0),
                (2.5, 4.0),
                (2.5, 4.0),
                (2.5, 4.0),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemographicProbs {
    pub employed: f64,
    pub informal: f64,
    pub urban: f64,
    /// Distribution over education levels 0..=3.
    pub education: [f64; 4],
    /// Distribution over region codes `0..region.len()`.
    pub region: Vec<f64>,
    /// Distribution over household sizes `1..=size.len()`.
    pub size: Vec<f64>,
    pub age_range: (u32, u32),
    pub weight_range: (f64, f64),
}

impl Default for DemographicProbs {
    fn default() -> Self {
        DemographicProbs {
            employed: 0.62,
            informal: 0.25,
            urban: 0.90,
            education: [0.05, 0.35, 0.42, 0.18],
            region: vec![0.40, 0.20, 0.15, 0.15, 0.10],
            size: vec![0.22, 0.28, 0.22, 0.16, 0.08, 0.04],
            age_range: (18, 90),
            weight_range: (60.0, 140.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationConfig {
    pub n: usize,
    /// Lognormal location of per-capita monthly income, per latent decile.
    pub income_log_mean_by_decile: [f64; DECILES],
    pub income_log_sd: f64,
    pub behavior_prob_by_decile: BehaviorByDecile,
    pub demographic_probs: DemographicProbs,
    pub seed: u64,
}

impl Default for PopulationConfig {
    fn default() -> Self {
        let medians = [
            6_500.0, 10_000.0, 13_000.0, 16_000.0, 19_500.0, 23_500.0, 28_500.0, 35_000.0,
            45_000.0, 70_000.0,
        ];
        PopulationConfig {
            n: 10_000,
            income_log_mean_by_decile: medians.map(f64::ln),
            income_log_sd: 0.25,
            behavior_prob_by_decile: BehaviorByDecile::default(),
            demographic_probs: DemographicProbs::default(),
            seed: 42,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0,1], got {p}")))
    }
}

fn check_distribution(name: &str, probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Config(format!("{name} must not be empty")));
    }
    for &p in probs {
        check_prob(name, p)?;
    }
    let total: f64 = probs.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config(format!("{name} has zero total mass")));
    }
    Ok(())
}

impl PopulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("population size n must be >= 1".into()));
        }
        if !(self.income_log_sd.is_finite() && self.income_log_sd > 0.0) {
            return Err(Error::Config("income_log_sd must be > 0".into()));
        }
        if self.income_log_mean_by_decile.iter().any(|m| !m.is_finite()) {
            return Err(Error::Config("income_log_mean_by_decile must be finite".into()));
        }
        let b = &self.behavior_prob_by_decile;
        for d in 0..DECILES {
            check_prob("on_time_12m", b.on_time_12m[d])?;
            check_prob("multi_product", b.multi_product[d])?;
            check_prob("negative_flag", b.negative_flag[d])?;
            let (a, bb) = b.utilization_beta[d];
            if !(a > 0.0 && bb > 0.0 && a.is_finite() && bb.is_finite()) {
                return Err(Error::Config(format!(
                    "utilization_beta for decile {} must be positive",
                    d + 1
                )));
            }
        }
        let g = &self.demographic_probs;
        check_prob("employed", g.employed)?;
        check_prob("informal", g.informal)?;
        check_prob("urban", g.urban)?;
        check_distribution("education", &g.education)?;
        check_distribution("region", &g.region)?;
        check_distribution("size", &g.size)?;
        if g.region.len() > usize::from(MAX_REGIONS) {
            return Err(Error::Config(format!("at most {MAX_REGIONS} regions")));
        }
        let (lo, hi) = g.age_range;
        if lo > hi || lo < MIN_AGE || hi > MAX_AGE {
            return Err(Error::Config(format!("age_range must be within [{MIN_AGE},{MAX_AGE}]")));
        }
        let (wlo, whi) = g.weight_range;
        if !(wlo > 0.0 && wlo <= whi && whi.is_finite()) {
            return Err(Error::Config("weight_range must satisfy 0 < lo <= hi".into()));
        }
        Ok(())
    }
}

pub(crate) fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    // validated: non-negative with positive mass
    WeightedIndex::new(probs).expect("validated distribution").sample(rng)
}

pub fn generate_population(cfg: &PopulationConfig) -> Result<Vec<Household>> {
    generate_population_with(cfg, Execution::default())
}

/// Two passes keyed by `(seed, id)`: structural attributes and income first,
/// then behavior calibrated to the household's realized weighted decile.
pub fn generate_population_with(cfg: &PopulationConfig, exec: Execution) -> Result<Vec<Household>> {
    cfg.validate()?;
    let g = &cfg.demographic_probs;
    let ids: Vec<u64> = (1..=cfg.n as u64).collect();
    let mut pop = exec.map(&ids, |&id| {
        let mut rng = stream(cfg.seed, Domain::Household, id);
        let latent = rng.random_range(0..DECILES);
        let z: f64 = rng.sample(StandardNormal);
        let pc = (cfg.income_log_mean_by_decile[latent] + cfg.income_log_sd * z).exp();
        let size = categorical(&mut rng, &g.size) as u32 + 1;
        let region = categorical(&mut rng, &g.region) as u8;
        let employed = bernoulli(&mut rng, g.employed);
        let informal = bernoulli(&mut rng, g.informal);
        let education = categorical(&mut rng, &g.education) as u8;
        let age = rng.random_range(g.age_range.0..=g.age_range.1);
        let urban = bernoulli(&mut rng, g.urban);
        let weight = if g.weight_range.0 == g.weight_range.1 {
            g.weight_range.0
        } else {
            rng.random_range(g.weight_range.0..g.weight_range.1)
        };
        Household {
            id,
            income: pc * f64::from(size),
            size,
            region,
            employed,
            informal,
            education,
            age,
            urban,
            on_time_12m: 0,
            utilization: 0.0,
            multi_product: 0,
            negative_flag: 0,
            weight,
        }
    });

    let deciles = assign_deciles(&pop)?;
    let b = &cfg.behavior_prob_by_decile;
    let draws = exec.map(&pop, |hh| {
        let d = usize::from(deciles.get(hh.id).expect("decile for every id")) - 1;
        let mut rng = stream(cfg.seed, Domain::Behavior, hh.id);
        let keys: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        let (a, bb) = b.utilization_beta[d];
        let utilization: f64 = Beta::new(a, bb).expect("validated beta").sample(&mut rng);
        (d, keys, utilization.clamp(0.0, 1.0))
    });

    // Binary behaviors: within each decile, the round(p * m) households with
    // the smallest keys carry the flag, a uniformly random subset of exact size.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); DECILES];
    for (i, (d, _, _)) in draws.iter().enumerate() {
        members[*d].push(i);
    }
    let mut flags = vec![[0u8; 3]; pop.len()];
    for (d, group) in members.iter().enumerate() {
        let probs = [b.on_time_12m[d], b.multi_product[d], b.negative_flag[d]];
        for (k, &p) in probs.iter().enumerate() {
            let mut ranked = group.clone();
            ranked.sort_by(|&x, &y| draws[x].1[k].total_cmp(&draws[y].1[k]).then(pop[x].id.cmp(&pop[y].id)));
            let count = (p * group.len() as f64).round() as usize;
            for &i in ranked.iter().take(count) {
                flags[i][k] = 1;
            }
        }
    }
    for ((hh, (_, _, utilization)), [on_time, multi, negative]) in pop.iter_mut().zip(draws).zip(flags) {
        hh.on_time_12m = on_time;
        hh.utilization = utilization;
        hh.multi_product = multi;
        hh.negative_flag = negative;
    }
    Ok(pop)
}

/// Decile (1..=10) of every household id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Deciles(BTreeMap<u64, u8>);

impl Deciles {
    pub fn get(&self, id: u64) -> Option<u8> {
        self.0.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, u8)> + '_ {
        self.0.iter().map(|(&k, &v)| (k, v))
    }
}

/// Person-weighted deciles of per-capita income.
///
/// Households are ordered by (per-capita income, id); each one lands in the
/// decile containing the midpoint of its cumulative-weight interval. A decile
/// boundary is therefore missed by at most half a household on each side.
pub fn assign_deciles(pop: &[Household]) -> Result<Deciles> {
    if pop.is_empty() {
        return Err(Error::Degenerate("cannot assign deciles to an empty population".into()));
    }
    let mut order: Vec<&Household> = pop.iter().collect();
    order.sort_by(|a, b| {
        per_capita_income(a)
            .total_cmp(&per_capita_income(b))
            .then(a.id.cmp(&b.id))
    });
    let total: f64 = order.iter().map(|h| h.person_weight()).sum();
    let mut cum = 0.0;
    let mut map = BTreeMap::new();
    for hh in order {
        let w = hh.person_weight();
        let mid = (cum + 0.5 * w) / total;
        let d = ((mid * DECILES as f64).floor() as usize + 1).min(DECILES);
        map.insert(hh.id, d as u8);
        cum += w;
    }
    Ok(Deciles(map))
}
