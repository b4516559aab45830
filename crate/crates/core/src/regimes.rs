//! Scoring and pricing of household credit under the three data regimes.
//!
//! Eligibility index: `phi = a0 + a1*employed + a2*(1 - informal) + a3*education/3 + a4*urban`.
//! Visibility score: `psi = b0 + b1*positive_data + b2*synthetic_access`.
//! Effective rate: `r = r_bar * (1 - gamma * psi)`, zero for households with `phi < tau`.
//! Burden: `r * debt / (12 * monthly income)`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Execution;
use crate::population::{per_capita_income, Household};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    /// Negative-only bureau data.
    Baseline,
    /// Positive behavioral data for households meeting the uplift rule.
    ScorePlus,
    /// Full portability: every household gains synthetic access.
    OpenFinance,
}

impl RegimeKind {
    pub const ALL: [RegimeKind; 3] = [RegimeKind::Baseline, RegimeKind::ScorePlus, RegimeKind::OpenFinance];

    pub fn label(self) -> &'static str {
        match self {
            RegimeKind::Baseline => "baseline",
            RegimeKind::ScorePlus => "scoreplus",
            RegimeKind::OpenFinance => "openfinance",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(RegimeKind::Baseline),
            "scoreplus" | "score+" => Ok(RegimeKind::ScorePlus),
            "openfinance" => Ok(RegimeKind::OpenFinance),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tier {
    Low,
    Medium,
    High,
}

/// How the three positive-data attributes combine into uplift eligibility.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpliftRule {
    /// `on_time AND (utilization < 0.30 OR multi_product)`.
    #[default]
    OnTimeAndEither,
    /// All three attributes.
    All,
    /// Any one attribute.
    Any,
}

pub const LOW_UTILIZATION: f64 = 0.30;

impl UpliftRule {
    pub fn admits(self, hh: &Household) -> bool {
        let on_time = hh.on_time_12m == 1;
        let low_util = hh.utilization < LOW_UTILIZATION;
        let multi = hh.multi_product == 1;
        match self {
            UpliftRule::OnTimeAndEither => on_time && (low_util || multi),
            UpliftRule::All => on_time && low_util && multi,
            UpliftRule::Any => on_time || low_util || multi,
        }
    }
}

/// APR reductions attached to tiers; reporting labels only, pricing uses the
/// continuous rate formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierReductions {
    pub low: f64,
    pub medium: f64,
    pub high: f64,
}

impl Default for TierReductions {
    fn default() -> Self {
        TierReductions {
            low: 0.0,
            medium: 0.15,
            high: 0.30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringParams {
    pub alpha: [f64; 5],
    pub beta: [f64; 3],
    pub gamma: f64,
    pub r_bar: f64,
    pub tau: f64,
    /// Median debt as a fraction of annual income.
    pub debt_median_ratio: f64,
    pub debt_log_sd: f64,
    /// Debt multiple for households whose behavioral record satisfies the
    /// uplift rule (active borrowers carry larger balances). `1.0` disables it.
    pub engaged_debt_multiplier: f64,
    pub tier_reductions: TierReductions,
    pub uplift_rule: UpliftRule,
    /// Per-capita monthly lines.
    pub poverty_line: f64,
    pub indigence_line: f64,
    pub seed: u64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            alpha: [0.2, 0.3, 0.2, 0.1, 0.1],
            beta: [0.0, 1.0, 0.5],
            gamma: 0.30,
            r_bar: 0.60,
            tau: 0.50,
            debt_median_ratio: 0.25,
            debt_log_sd: 0.50,
            engaged_debt_multiplier: 2.5,
            tier_reductions: TierReductions::default(),
            uplift_rule: UpliftRule::default(),
            poverty_line: 7_500.0,
            indigence_line: 3_000.0,
            seed: 42,
        }
    }
}

impl ScoringParams {
    /// Every visibility score a household can reach in some regime.
    pub fn attainable_psi(&self) -> [f64; 4] {
        let [b0, b1, b2] = self.beta;
        [b0, b0 + b1, b0 + b2, b0 + b1 + b2]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.alpha.iter().chain(self.beta.iter()).all(|v| v.is_finite())
            && [
                self.gamma,
                self.r_bar,
                self.tau,
                self.debt_median_ratio,
                self.debt_log_sd,
                self.engaged_debt_multiplier,
                self.poverty_line,
                self.indigence_line,
            ]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("scoring parameters must be finite".into()));
        }
        if self.r_bar <= 0.0 {
            return Err(Error::Config("r_bar must be > 0".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        let psi = self.attainable_psi();
        if psi.iter().any(|&p| p < 0.0) {
            return Err(Error::Config("beta must keep every attainable psi >= 0".into()));
        }
        let psi_max = psi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.gamma * psi_max >= 1.0 {
            return Err(Error::Config(format!(
                "gamma * psi_max = {} must be < 1 for positive rates",
                self.gamma * psi_max
            )));
        }
        if !(0.0 < self.indigence_line && self.indigence_line < self.poverty_line) {
            return Err(Error::Config("lines must satisfy 0 < indigence_line < poverty_line".into()));
        }
        if self.debt_log_sd <= 0.0 {
            return Err(Error::Config("debt_log_sd must be > 0".into()));
        }
        if self.debt_median_ratio < 0.0 {
            return Err(Error::Config("debt_median_ratio must be >= 0".into()));
        }
        if self.engaged_debt_multiplier <= 0.0 {
            return Err(Error::Config("engaged_debt_multiplier must be > 0".into()));
        }
        Ok(())
    }
}

pub fn eligibility_index(hh: &Household, p: &ScoringParams) -> f64 {
    let [a0, a1, a2, a3, a4] = p.alpha;
    a0 + a1 * f64::from(hh.employed)
        + a2 * (1.0 - f64::from(hh.informal))
        + a3 * f64::from(hh.education) / 3.0
        + a4 * f64::from(hh.urban)
}

pub fn positive_data_flag(hh: &Household, regime: RegimeKind, rule: UpliftRule) -> u8 {
    match regime {
        RegimeKind::Baseline => 0,
        RegimeKind::ScorePlus | RegimeKind::OpenFinance => u8::from(rule.admits(hh)),
    }
}

pub fn synthetic_access_flag(regime: RegimeKind) -> u8 {
    u8::from(regime == RegimeKind::OpenFinance)
}

pub fn visibility_score(hh: &Household, regime: RegimeKind, p: &ScoringParams) -> f64 {
    let [b0, b1, b2] = p.beta;
    let positive = positive_data_flag(hh, regime, p.uplift_rule);
    b0 + b1 * f64::from(positive) + b2 * f64::from(synthetic_access_flag(regime))
}

pub fn effective_rate(psi: f64, p: &ScoringParams) -> Result<f64> {
    let cut = p.gamma * psi;
    if cut >= 1.0 {
        return Err(Error::ParameterDomain(format!(
            "gamma * psi = {cut} >= 1 would give a non-positive rate"
        )));
    }
    Ok(p.r_bar * (1.0 - cut))
}

pub fn visibility_tier(positive_data: u8, synthetic_access: u8) -> Tier {
    if synthetic_access == 1 {
        Tier::High
    } else if positive_data == 1 {
        Tier::Medium
    } else {
        Tier::Low
    }
}

/// Debt stock of an eligible household:
/// `12 * income * median_ratio * exp(sd * z)`, times the engagement multiple
/// when the household's record meets the uplift rule. `z` comes from the
/// `(seed, id)` stream, so the draw is identical in every regime.
pub fn assign_debt(hh: &Household, p: &ScoringParams) -> f64 {
    let z: f64 = stream(p.seed, Domain::Debt, hh.id).sample(StandardNormal);
    let engaged = if p.uplift_rule.admits(hh) {
        p.engaged_debt_multiplier
    } else {
        1.0
    };
    12.0 * hh.income * p.debt_median_ratio * engaged * (p.debt_log_sd * z).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdOutcome {
    pub id: u64,
    pub regime: RegimeKind,
    pub phi: f64,
    pub psi: f64,
    #[serde(with = "bit")]
    pub eligible: bool,
    pub tier: Tier,
    pub positive_data: u8,
    pub synthetic_access: u8,
    pub rate: f64,
    pub debt: f64,
    pub annual_interest: f64,
    pub burden: f64,
    pub net_income_pc: f64,
    #[serde(with = "bit")]
    pub poor: bool,
    #[serde(with = "bit")]
    pub indigent: bool,
}

mod bit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(de::Error::custom(format!("expected 0 or 1, got {v}"))),
        }
    }
}

pub fn simulate_household(hh: &Household, regime: RegimeKind, p: &ScoringParams) -> Result<HouseholdOutcome> {
    let phi = eligibility_index(hh, p);
    let positive_data = positive_data_flag(hh, regime, p.uplift_rule);
    let synthetic_access = synthetic_access_flag(regime);
    let psi = visibility_score(hh, regime, p);
    let tier = visibility_tier(positive_data, synthetic_access);
    let eligible = phi >= p.tau;
    let (rate, debt) = if eligible {
        (effective_rate(psi, p)?, assign_debt(hh, p))
    } else {
        (0.0, 0.0)
    };
    let annual_interest = rate * debt;
    let burden = annual_interest / (12.0 * hh.income);
    let net_income_pc = (hh.income - annual_interest / 12.0) / f64::from(hh.size);
    debug_assert!(eligible || (net_income_pc == per_capita_income(hh)));
    Ok(HouseholdOutcome {
        id: hh.id,
        regime,
        phi,
        psi,
        eligible,
        tier,
        positive_data,
        synthetic_access,
        rate,
        debt,
        annual_interest,
        burden,
        net_income_pc,
        poor: net_income_pc < p.poverty_line,
        indigent: net_income_pc < p.indigence_line,
    })
}

pub fn simulate_regime(pop: &[Household], regime: RegimeKind, p: &ScoringParams) -> Result<Vec<HouseholdOutcome>> {
    simulate_regime_with(pop, regime, p, Execution::default())
}

pub fn simulate_regime_with(
    pop: &[Household],
    regime: RegimeKind,
    p: &ScoringParams,
    exec: Execution,
) -> Result<Vec<HouseholdOutcome>> {
    p.validate()?;
    exec.map(pop, |hh| simulate_household(hh, regime, p))
        .into_iter()
        .collect()
}

pub fn write_outcomes<W: Write>(writer: W, outcomes: &[HouseholdOutcome]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for o in outcomes {
        wtr.serialize(o)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_outcomes<R: Read>(reader: R) -> Result<Vec<HouseholdOutcome>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        out.push(rec.map_err(|e: csv::Error| Error::Row {
            row: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
