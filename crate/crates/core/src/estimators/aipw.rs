use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linear::fit_linear_matrix;
use super::logistic::{fit_logistic_matrix, propensity_matrix, DEFAULT_CLIP};
use super::DesignMatrix;
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::rng::{stream, Domain};

/// Resample attempts per bootstrap replicate before giving up.
const MAX_REDRAWS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttOptions {
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub propensity_clip: f64,
}

impl Default for AttOptions {
    fn default() -> Self {
        AttOptions {
            bootstrap_reps: 500,
            seed: 0,
            propensity_clip: DEFAULT_CLIP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttResult {
    pub att: f64,
    /// Bootstrap standard deviation of the estimate.
    pub se: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub propensity_coefs: Vec<f64>,
    pub outcome_coefs: Vec<f64>,
    pub outcome_ridge_fallback: bool,
    pub bootstrap_reps: usize,
}

struct PointEstimate {
    att: f64,
    propensity: Vec<f64>,
    outcome: Vec<f64>,
    ridge: bool,
}

/// AIPW estimate of the ATT:
/// `[sum T (y - m0) - sum (1-T) e/(1-e) (y - m0)] / sum T`, with `m0` a
/// least-squares fit on controls and `e` a logistic propensity on everyone.
fn point(x: &DMatrix<f64>, t: &[u8], y: &[f64], clip: f64, warm: Option<&[f64]>) -> Result<PointEstimate> {
    let control: Vec<usize> = (0..t.len()).filter(|&i| t[i] == 0).collect();
    let xc = x.select_rows(&control);
    let yc: Vec<f64> = control.iter().map(|&i| y[i]).collect();
    let outcome = fit_linear_matrix(&xc, &yc)?;
    let prop = fit_logistic_matrix(x, t, warm)?;
    let e = propensity_matrix(&prop.coefs, x, clip);
    let m0 = outcome.predict(x);

    let (mut treated_sum, mut control_sum, mut n1) = (0.0, 0.0, 0.0);
    for i in 0..t.len() {
        let resid = y[i] - m0[i];
        if t[i] == 1 {
            treated_sum += resid;
            n1 += 1.0;
        } else {
            control_sum += e[i] / (1.0 - e[i]) * resid;
        }
    }
    Ok(PointEstimate {
        att: (treated_sum - control_sum) / n1,
        propensity: prop.coefs,
        outcome: outcome.coefs,
        ridge: outcome.ridge_fallback,
    })
}

fn check_inputs(x: &DesignMatrix, t: &[u8], y: &[f64]) -> Result<(usize, usize)> {
    let n = x.nrows();
    if t.len() != n || y.len() != n {
        return Err(Error::Shape(format!(
            "design has {n} rows, treatment {} and outcome {}",
            t.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite outcome".into()));
    }
    let n1 = t.iter().filter(|&&v| v == 1).count();
    let n0 = t.iter().filter(|&&v| v == 0).count();
    if n1 + n0 != n {
        return Err(Error::Domain("treatment must be 0/1".into()));
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::Degenerate("need both treated and control units".into()));
    }
    Ok((n1, n0))
}

/// Point estimate only.
pub fn aipw_att(x: &DesignMatrix, t: &[u8], y: &[f64], clip: f64) -> Result<f64> {
    check_inputs(x, t, y)?;
    Ok(point(x.matrix(), t, y, clip, None)?.att)
}

pub fn dr_att(x: &DesignMatrix, t: &[u8], y: &[f64], opts: &AttOptions) -> Result<AttResult> {
    dr_att_with(x, t, y, opts, Execution::default())
}

/// Doubly-robust ATT with a nonparametric bootstrap standard error.
/// Replicate `b` resamples rows from the `(seed, b)` stream; resamples with a
/// single class, or on which a nuisance fit fails, are redrawn.
pub fn dr_att_with(x: &DesignMatrix, t: &[u8], y: &[f64], opts: &AttOptions, exec: Execution) -> Result<AttResult> {
    let (n_treated, n_control) = check_inputs(x, t, y)?;
    let full = point(x.matrix(), t, y, opts.propensity_clip, None)?;
    let n = t.len();

    let reps = exec.map_range(opts.bootstrap_reps, |b| -> Result<f64> {
        let mut rng = stream(opts.seed, Domain::Bootstrap, b as u64);
        for _ in 0..MAX_REDRAWS {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let tb: Vec<u8> = idx.iter().map(|&i| t[i]).collect();
            let ones = tb.iter().filter(|&&v| v == 1).count();
            if ones == 0 || ones == n {
                continue;
            }
            let yb: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let xb = x.select_rows(&idx);
            if let Ok(p) = point(&xb, &tb, &yb, opts.propensity_clip, Some(&full.propensity)) {
                return Ok(p.att);
            }
        }
        Err(Error::Degenerate(format!(
            "bootstrap replicate {b} failed after {MAX_REDRAWS} resamples"
        )))
    });
    let draws: Vec<f64> = reps.into_iter().collect::<Result<_>>()?;
    let se = if draws.len() >= 2 {
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        (draws.iter().map(|d| (d - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt()
    } else {
        0.0
    };

    Ok(AttResult {
        att: full.att,
        se,
        n_treated,
        n_control,
        propensity_coefs: full.propensity,
        outcome_coefs: full.outcome,
        outcome_ridge_fallback: full.ridge,
        bootstrap_reps: opts.bootstrap_reps,
    })
}
