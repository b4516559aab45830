use nalgebra::{DMatrix, DVector};

use super::DesignMatrix;
use crate::error::{Error, Result};

const RIDGE: f64 = 1e-8;
/// Smallest accepted `|R_jj| / max |R_ii|` before falling back to ridge.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coefs: Vec<f64>,
    /// Set when the design was numerically rank-deficient and the ridge
    /// normal equations were solved instead of the QR system.
    pub ridge_fallback: bool,
}

impl LinearFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * DVector::from_column_slice(&self.coefs)
    }
}

pub fn fit_linear(x: &DesignMatrix, y: &[f64]) -> Result<LinearFit> {
    fit_linear_matrix(x.matrix(), y)
}

/// Least squares through a Householder QR decomposition.
pub(crate) fn fit_linear_matrix(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearFit> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::Shape(format!("{} responses for {n} rows", y.len())));
    }
    if n <= k {
        return Err(Error::Shape(format!("need n > k, got n={n}, k={k}")));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite regression input".into()));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let deficient = max == 0.0 || diag.iter().any(|&d| d <= RANK_TOL * max);
    if !deficient {
        let mut qty = DVector::from_column_slice(y);
        qr.q_tr_mul(&mut qty);
        let rhs = qty.rows(0, k).into_owned();
        if let Some(beta) = r.solve_upper_triangular(&rhs) {
            return Ok(LinearFit {
                coefs: beta.iter().copied().collect(),
                ridge_fallback: false,
            });
        }
    }
    let mut xtx = x.transpose() * x;
    for i in 0..k {
        xtx[(i, i)] += RIDGE;
    }
    let xty = x.transpose() * DVector::from_column_slice(y);
    let beta = xtx
        .cholesky()
        .ok_or_else(|| Error::Degenerate("ridge normal equations not positive definite".into()))?
        .solve(&xty);
    Ok(LinearFit {
        coefs: beta.iter().copied().collect(),
        ridge_fallback: true,
    })
}
