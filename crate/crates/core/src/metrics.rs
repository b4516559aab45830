//! Distributional diagnostics: weighted Gini and Lorenz curves, poverty and
//! indigence headcounts, poverty transitions, decile summaries.
//!
//! Weighting conventions: headcount rates use person weights
//! (`weight * size`); burden, rate and Gini statistics use household weights.
//! All reductions run sequentially in input or sorted order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::population::{Deciles, Household, DECILES};
use crate::regimes::{visibility_score, HouseholdOutcome, RegimeKind, ScoringParams};

fn check_weighted(values: &[f64], weights: &[f64]) -> Result<()> {
    if values.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} values but {} weights",
            values.len(),
            weights.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::UndefinedMetric("empty input".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Domain(format!("values must be finite and non-negative, got {v}")));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
        return Err(Error::Domain(format!("weights must be finite and positive, got {w}")));
    }
    Ok(())
}

fn sorted_pairs(values: &[f64], weights: &[f64]) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = values.iter().copied().zip(weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pairs
}

/// Weighted Gini coefficient,
/// `sum_ij w_i w_j |x_i - x_j| / (2 W^2 mu)`, evaluated in O(n log n) as
/// `sum_i w_i x_i (2 W_before(i) + w_i - W) / (W * S)` over ascending values.
pub fn gini(values: &[f64], weights: &[f64]) -> Result<f64> {
    check_weighted(values, weights)?;
    let pairs = sorted_pairs(values, weights);
    let total_w: f64 = pairs.iter().map(|p| p.1).sum();
    let total_s: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    if total_s <= 0.0 {
        return Err(Error::UndefinedMetric("Gini of an all-zero distribution".into()));
    }
    let mut before = 0.0;
    let mut acc = 0.0;
    for &(x, w) in &pairs {
        acc += w * x * (2.0 * before + w - total_w);
        before += w;
    }
    Ok((acc / (total_w * total_s)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorenzCurve {
    /// `(cumulative population share, cumulative value share)`.
    pub points: Vec<(f64, f64)>,
}

impl LorenzCurve {
    /// Twice the area between the diagonal and the trapezoid curve.
    pub fn gini(&self) -> f64 {
        let area: f64 = self
            .points
            .windows(2)
            .map(|s| (s[1].0 - s[0].0) * (s[1].1 + s[0].1) * 0.5)
            .sum();
        1.0 - 2.0 * area
    }
}

/// One point per distinct value, plus the origin.
pub fn lorenz(values: &[f64], weights: &[f64]) -> Result<LorenzCurve> {
    check_weighted(values, weights)?;
    let pairs = sorted_pairs(values, weights);
    let total_w: f64 = pairs.iter().map(|p| p.1).sum();
    let total_s: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    if total_s <= 0.0 {
        return Err(Error::UndefinedMetric("Lorenz curve of an all-zero distribution".into()));
    }
    let mut points = vec![(0.0, 0.0)];
    let (mut cw, mut cs) = (0.0, 0.0);
    for (i, &(x, w)) in pairs.iter().enumerate() {
        cw += w;
        cs += x * w;
        let last_of_group = pairs.get(i + 1).is_none_or(|next| next.0 != x);
        if last_of_group {
            points.push(((cw / total_w).min(1.0), (cs / total_s).min(1.0)));
        }
    }
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0);
    }
    Ok(LorenzCurve { points })
}

fn index_population(pop: &[Household]) -> HashMap<u64, &Household> {
    pop.iter().map(|h| (h.id, h)).collect()
}

/// Pairs every outcome with its household, failing unless the id sets match.
fn align<'a>(outcomes: &'a [HouseholdOutcome], pop: &'a [Household]) -> Result<Vec<(&'a HouseholdOutcome, &'a Household)>> {
    if outcomes.len() != pop.len() {
        return Err(Error::Alignment(format!(
            "{} outcomes for {} households",
            outcomes.len(),
            pop.len()
        )));
    }
    let index = index_population(pop);
    outcomes
        .iter()
        .map(|o| {
            index
                .get(&o.id)
                .map(|h| (o, *h))
                .ok_or_else(|| Error::Alignment(format!("outcome id {} not in population", o.id)))
        })
        .collect()
}

fn headcount(outcomes: &[HouseholdOutcome], pop: &[Household], line: f64) -> Result<f64> {
    let pairs = align(outcomes, pop)?;
    let (mut below, mut total) = (0.0, 0.0);
    for (o, h) in pairs {
        let w = h.person_weight();
        total += w;
        if o.net_income_pc < line {
            below += w;
        }
    }
    Ok(below / total)
}

/// Person-weighted share with per-capita net income below `line`.
pub fn poverty_rate(outcomes: &[HouseholdOutcome], pop: &[Household], line: f64) -> Result<f64> {
    headcount(outcomes, pop, line)
}

pub fn indigence_rate(outcomes: &[HouseholdOutcome], pop: &[Household], line: f64) -> Result<f64> {
    headcount(outcomes, pop, line)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    /// `counts[poor_before][poor_after]`.
    pub counts: [[u64; 2]; 2],
    /// Same cells summed over household weights.
    pub weighted: [[f64; 2]; 2],
}

impl TransitionMatrix {
    /// Poor under the first regime, non-poor under the second.
    pub fn exits(&self) -> u64 {
        self.counts[1][0]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn transition_matrix(
    out_a: &[HouseholdOutcome],
    out_b: &[HouseholdOutcome],
    pop: &[Household],
) -> Result<TransitionMatrix> {
    let pairs = align(out_a, pop)?;
    let b_index: HashMap<u64, &HouseholdOutcome> = out_b.iter().map(|o| (o.id, o)).collect();
    if out_b.len() != out_a.len() || b_index.len() != out_b.len() {
        return Err(Error::Alignment("outcome sets cover different ids".into()));
    }
    let mut m = TransitionMatrix {
        counts: [[0; 2]; 2],
        weighted: [[0.0; 2]; 2],
    };
    for (a, h) in pairs {
        let b = b_index
            .get(&a.id)
            .ok_or_else(|| Error::Alignment(format!("id {} missing from second outcome set", a.id)))?;
        let (i, j) = (usize::from(a.poor), usize::from(b.poor));
        m.counts[i][j] += 1;
        m.weighted[i][j] += h.weight;
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Weighted quantile by linear interpolation between order statistics.
///
/// The k-th sorted value sits at plotting position
/// `(weight strictly below it) / (total weight - weight of the largest)`,
/// which reduces to the `(k-1)/(n-1)` positions of the usual type-7 rule
/// when weights are equal.
pub fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    if n == 1 {
        return sorted[0].0;
    }
    let total: f64 = sorted.iter().map(|p| p.1).sum();
    let denom = total - sorted[n - 1].1;
    let mut below = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for &(x, w) in sorted {
        let pos = below / denom;
        if pos >= q {
            return match prev {
                Some((px, ppos)) if pos > ppos => px + (x - px) * (q - ppos) / (pos - ppos),
                _ => x,
            };
        }
        prev = Some((x, pos));
        below += w;
    }
    sorted[n - 1].0
}

pub fn five_number(values: &[f64], weights: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let pairs = sorted_pairs(values, weights);
    Some(FiveNumber {
        min: pairs[0].0,
        q1: weighted_quantile(&pairs, 0.25),
        median: weighted_quantile(&pairs, 0.5),
        q3: weighted_quantile(&pairs, 0.75),
        max: pairs[pairs.len() - 1].0,
    })
}

/// Summaries for one decile. `None` marks an empty group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecileStats {
    pub decile: u8,
    pub households: usize,
    pub burden: Option<FiveNumber>,
    pub psi_gain: Option<FiveNumber>,
}

/// Five-number summaries of burden and of visibility gain over the baseline
/// score, per income decile.
pub fn decile_burden_stats(
    outcomes: &[HouseholdOutcome],
    pop: &[Household],
    deciles: &Deciles,
    params: &ScoringParams,
) -> Result<Vec<DecileStats>> {
    let pairs = align(outcomes, pop)?;
    let mut groups: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = vec![Default::default(); DECILES];
    for (o, h) in pairs {
        let d = deciles
            .get(o.id)
            .ok_or_else(|| Error::Alignment(format!("no decile for id {}", o.id)))?;
        let g = &mut groups[usize::from(d) - 1];
        g.0.push(o.burden);
        g.1.push(o.psi - visibility_score(h, RegimeKind::Baseline, params));
        g.2.push(h.weight);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(i, (burden, gain, w))| DecileStats {
            decile: i as u8 + 1,
            households: burden.len(),
            burden: five_number(&burden, &w),
            psi_gain: five_number(&gain, &w),
        })
        .collect())
}

/// Household-weighted share whose visibility score exceeds the base one.
pub fn pct_improved(out_base: &[HouseholdOutcome], out_regime: &[HouseholdOutcome], pop: &[Household]) -> Result<f64> {
    let pairs = align(out_regime, pop)?;
    let base: HashMap<u64, f64> = out_base.iter().map(|o| (o.id, o.psi)).collect();
    if base.len() != out_regime.len() {
        return Err(Error::Alignment("outcome sets cover different ids".into()));
    }
    let (mut up, mut total) = (0.0, 0.0);
    for (o, h) in pairs {
        let b = base
            .get(&o.id)
            .ok_or_else(|| Error::Alignment(format!("id {} missing from base outcomes", o.id)))?;
        total += h.weight;
        if o.psi > *b {
            up += h.weight;
        }
    }
    Ok(up / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub regime: RegimeKind,
    /// Household-weighted mean of burden (fraction of income).
    pub mean_burden: f64,
    /// Gini of per-capita net income, floored at zero.
    pub gini_income: f64,
    pub gini_burden: f64,
    pub poverty_rate: f64,
    pub indigence_rate: f64,
    /// Mean effective rate over eligible households; `None` if nobody is eligible.
    pub mean_rate: Option<f64>,
    pub pct_improved: f64,
    pub lorenz_burden: LorenzCurve,
    pub decile_stats: Vec<DecileStats>,
}

/// Assembles the report for one regime. Visibility gains are measured
/// against the baseline score, which depends only on the parameters.
pub fn build_report(
    outcomes: &[HouseholdOutcome],
    pop: &[Household],
    deciles: &Deciles,
    params: &ScoringParams,
) -> Result<MetricsReport> {
    let pairs = align(outcomes, pop)?;
    let regime = outcomes
        .first()
        .map(|o| o.regime)
        .ok_or_else(|| Error::Degenerate("no outcomes".into()))?;
    if outcomes.iter().any(|o| o.regime != regime) {
        return Err(Error::Alignment("outcomes mix several regimes".into()));
    }

    let weights: Vec<f64> = pairs.iter().map(|(_, h)| h.weight).collect();
    let burdens: Vec<f64> = pairs.iter().map(|(o, _)| o.burden).collect();
    let net: Vec<f64> = pairs.iter().map(|(o, _)| o.net_income_pc.max(0.0)).collect();
    let total_w: f64 = weights.iter().sum();
    let mean_burden = burdens.iter().zip(&weights).map(|(b, w)| b * w).sum::<f64>() / total_w;

    let (mut rate_sum, mut rate_w) = (0.0, 0.0);
    let (mut up, mut total) = (0.0, 0.0);
    for (o, h) in &pairs {
        if o.eligible {
            rate_sum += o.rate * h.weight;
            rate_w += h.weight;
        }
        total += h.weight;
        if o.psi > visibility_score(h, RegimeKind::Baseline, params) {
            up += h.weight;
        }
    }

    Ok(MetricsReport {
        regime,
        mean_burden,
        gini_income: gini(&net, &weights)?,
        gini_burden: gini(&burdens, &weights)?,
        poverty_rate: poverty_rate(outcomes, pop, params.poverty_line)?,
        indigence_rate: indigence_rate(outcomes, pop, params.indigence_line)?,
        mean_rate: (rate_w > 0.0).then(|| rate_sum / rate_w),
        pct_improved: up / total,
        lorenz_burden: lorenz(&burdens, &weights)?,
        decile_stats: decile_burden_stats(outcomes, pop, deciles, params)?,
    })
}
