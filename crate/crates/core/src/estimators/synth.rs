use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITER: usize = 10_000;
const IMPROVEMENT_TOL: f64 = 1e-12;
/// Fixed-point residual of the projected-gradient map.
const STATIONARITY_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthControlResult {
    pub weights: Vec<f64>,
    pub pre_rmse: f64,
    /// Treated minus synthetic, over every period.
    pub gaps: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection onto `{w >= 0, sum w = 1}` (sort-based).
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cumsum += ui;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// `sum_{t in pre} (treated_t - sum_j w_j donor_jt)^2`.
pub fn synthetic_control_objective(treated: &[f64], donors: &[Vec<f64>], pre_periods: &[usize], w: &[f64]) -> f64 {
    pre_periods
        .iter()
        .map(|&t| {
            let synth: f64 = donors.iter().zip(w).map(|(d, wj)| wj * d[t]).sum();
            (treated[t] - synth).powi(2)
        })
        .sum()
}

fn validate(treated: &[f64], donors: &[Vec<f64>], pre_periods: &[usize]) -> Result<()> {
    let t = treated.len();
    if donors.len() < 2 {
        return Err(Error::Shape(format!("need at least 2 donors, got {}", donors.len())));
    }
    if let Some(d) = donors.iter().find(|d| d.len() != t) {
        return Err(Error::Shape(format!("donor series of length {} for {t} periods", d.len())));
    }
    if pre_periods.len() < 2 {
        return Err(Error::Shape("need at least 2 pre-intervention periods".into()));
    }
    if let Some(p) = pre_periods.iter().find(|&&p| p >= t) {
        return Err(Error::Shape(format!("pre-period index {p} out of range for {t} periods")));
    }
    let mut sorted = pre_periods.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != pre_periods.len() {
        return Err(Error::Shape("duplicate pre-period index".into()));
    }
    if treated.iter().chain(donors.iter().flatten()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite panel entry".into()));
    }
    Ok(())
}

/// Simplex-constrained least squares on the pre-period trajectory, solved by
/// accelerated projected gradient with adaptive restart (step `1/L`, `L` the
/// largest eigenvalue of the donor Gram matrix times two).
pub fn synthetic_control(treated: &[f64], donors: &[Vec<f64>], pre_periods: &[usize]) -> Result<SynthControlResult> {
    validate(treated, donors, pre_periods)?;
    let j = donors.len();
    let t0 = pre_periods.len();
    let a = DMatrix::from_fn(j, t0, |r, c| donors[r][pre_periods[c]]);
    let x = DVector::from_iterator(t0, pre_periods.iter().map(|&p| treated[p]));
    let gram = &a * a.transpose();
    let lin = &a * &x;
    let lmax = SymmetricEigen::new(gram.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let step = if lmax > 0.0 { 1.0 / (2.0 * lmax) } else { 1.0 };

    let objective = |w: &[f64]| -> f64 {
        let wv = DVector::from_column_slice(w);
        (a.transpose() * wv - &x).norm_squared()
    };
    let pg_step = |w: &[f64]| -> Vec<f64> {
        let wv = DVector::from_column_slice(w);
        let grad = (&gram * &wv - &lin) * 2.0;
        let moved: Vec<f64> = w.iter().zip(grad.iter()).map(|(wi, gi)| wi - step * gi).collect();
        project_simplex(&moved)
    };

    let mut w = vec![1.0 / j as f64; j];
    let mut f = objective(&w);
    let mut y = w.clone();
    let mut momentum = 1.0f64;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let mut next = pg_step(&y);
        let mut f_next = objective(&next);
        if f_next > f {
            // restart from the last iterate with a plain step
            momentum = 1.0;
            next = pg_step(&w);
            f_next = objective(&next);
        }
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / m_next;
        y = next.iter().zip(&w).map(|(n, o)| n + beta * (n - o)).collect();
        let improvement = f - f_next;
        w = next;
        f = f_next;
        momentum = m_next;

        if improvement < IMPROVEMENT_TOL {
            let fixed = pg_step(&w);
            let resid = fixed.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if resid < STATIONARITY_TOL {
                converged = true;
                break;
            }
        }
    }

    let (polished, extra) = active_set(&gram, &lin, &w);
    iterations += extra;
    if let Some(v) = polished {
        if objective(&v) <= f + 1e-15 * (1.0 + f) {
            w = v;
            converged = true;
        }
    }

    let gaps: Vec<f64> = (0..treated.len())
        .map(|t| treated[t] - donors.iter().zip(&w).map(|(d, wj)| wj * d[t]).sum::<f64>())
        .collect();
    let pre_rmse = (pre_periods.iter().map(|&p| gaps[p] * gaps[p]).sum::<f64>() / t0 as f64).sqrt();
    Ok(SynthControlResult {
        weights: w,
        pre_rmse,
        gaps,
        iterations,
        converged,
    })
}

/// Primal active-set refinement of a feasible `w` for
/// `min w'Gw - 2 w'c` over the simplex. Returns the KKT point, if reached,
/// and the number of iterations spent.
fn active_set(gram: &DMatrix<f64>, lin: &DVector<f64>, start: &[f64]) -> (Option<Vec<f64>>, usize) {
    let j = start.len();
    let scale = 1.0 + 2.0 * (gram.amax() + lin.amax());
    let tol = 1e-12 * scale;
    let mut w = start.to_vec();
    let mut support: Vec<bool> = w.iter().map(|&v| v > 0.0).collect();
    for it in 1..=(20 * j + 20) {
        let idx: Vec<usize> = (0..j).filter(|&i| support[i]).collect();
        let Some((v, mu)) = equality_solution(gram, lin, &idx) else {
            return (None, it);
        };
        let mut full = vec![0.0; j];
        for (&i, &vi) in idx.iter().zip(&v) {
            full[i] = vi;
        }
        if let Some(alpha) = idx
            .iter()
            .filter(|&&i| full[i] < 0.0)
            .map(|&i| w[i] / (w[i] - full[i]))
            .min_by(f64::total_cmp)
        {
            // blocked: move to the boundary and drop the components that hit it
            for i in 0..j {
                w[i] += alpha * (full[i] - w[i]);
            }
            for &i in &idx {
                if w[i] <= 1e-15 {
                    w[i] = 0.0;
                    support[i] = false;
                }
            }
            if !support.iter().any(|&s| s) {
                return (None, it);
            }
            renormalize(&mut w);
            continue;
        }
        w = full;
        // multipliers of inactive bounds: grad_i - mu >= 0 at the optimum
        let wv = DVector::from_column_slice(&w);
        let grad = (gram * &wv - lin) * 2.0;
        let entering = (0..j)
            .filter(|&i| !support[i])
            .map(|i| (i, grad[i] - mu))
            .filter(|&(_, m)| m < -tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match entering {
            Some((i, _)) => support[i] = true,
            None => return (Some(w), it),
        }
    }
    (None, 20 * j + 20)
}

/// Minimizer of the quadratic restricted to `idx` with weights summing to one,
/// and the multiplier of the sum constraint.
fn equality_solution(gram: &DMatrix<f64>, lin: &DVector<f64>, idx: &[usize]) -> Option<(Vec<f64>, f64)> {
    let k = idx.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    let mut rhs = DVector::zeros(k + 1);
    for (r, &i) in idx.iter().enumerate() {
        for (c, &jj) in idx.iter().enumerate() {
            kkt[(r, c)] = 2.0 * gram[(i, jj)];
        }
        kkt[(r, k)] = -1.0;
        kkt[(k, r)] = 1.0;
        rhs[r] = 2.0 * lin[i];
    }
    rhs[k] = 1.0;
    let eps = 1e-13 * kkt.amax().max(1.0);
    let sol = kkt.clone().svd(true, true).solve(&rhs, eps).ok()?;
    let resid = (&kkt * &sol - &rhs).amax();
    if !sol.iter().all(|v| v.is_finite()) || resid > 1e-9 * (1.0 + rhs.amax()) {
        return None;
    }
    Some((sol.rows(0, k).iter().copied().collect(), sol[k]))
}

fn renormalize(w: &mut [f64]) {
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        for v in w.iter_mut() {
            *v /= total;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceboRun {
    /// Index of the donor treated as the placebo unit.
    pub unit: usize,
    pub gaps: Vec<f64>,
    pub pre_rmse: f64,
}

/// Re-runs the fit with each donor in turn as the treated unit and the
/// remaining donors as its pool.
pub fn placebo_gaps(donors: &[Vec<f64>], pre_periods: &[usize]) -> Result<Vec<PlaceboRun>> {
    if donors.len() < 3 {
        return Err(Error::InsufficientPool {
            got: donors.len(),
            need: 3,
        });
    }
    (0..donors.len())
        .map(|u| {
            let pool: Vec<Vec<f64>> = donors
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != u)
                .map(|(_, d)| d.clone())
                .collect();
            let fit = synthetic_control(&donors[u], &pool, pre_periods)?;
            Ok(PlaceboRun {
                unit: u,
                gaps: fit.gaps,
                pre_rmse: fit.pre_rmse,
            })
        })
        .collect()
}
