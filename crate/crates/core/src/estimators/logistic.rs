use nalgebra::{DMatrix, DVector};

use super::DesignMatrix;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const LL_TOL: f64 = 1e-8;
const RIDGE: f64 = 1e-8;
const DIVERGENCE_NORM: f64 = 1e4;
pub const DEFAULT_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefs: Vec<f64>,
    pub iterations: usize,
    /// Log-likelihood at the start and after every accepted step.
    pub log_likelihood: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Log-likelihood at `eta`, filling `p` with the fitted probabilities.
///
/// Row `i` contributes `t e - max(e, 0) - ln(1 + a)` with `a = exp(-|e|)`.
/// The `ln(1 + a)` terms are summed as logarithms of blocked products; each
/// factor lies in `[1, 2]`, so a block of 512 cannot overflow.
fn evaluate(eta: &DVector<f64>, t: &[u8], p: &mut [f64]) -> f64 {
    const BLOCK: usize = 512;
    let mut linear = 0.0;
    let mut logs = 0.0;
    let mut prod = 1.0;
    for (i, ((&e, &ti), pi)) in eta.iter().zip(t).zip(p.iter_mut()).enumerate() {
        let a = (-e.abs()).exp();
        let denom = 1.0 + a;
        *pi = if e >= 0.0 { 1.0 / denom } else { a / denom };
        linear += f64::from(ti) * e - e.max(0.0);
        prod *= denom;
        if (i + 1) % BLOCK == 0 {
            logs += prod.ln();
            prod = 1.0;
        }
    }
    linear - (logs + prod.ln())
}

pub fn fit_logistic(x: &DesignMatrix, t: &[u8]) -> Result<LogisticFit> {
    fit_logistic_matrix(x.matrix(), t, None)
}

/// Newton-Raphson / IRLS with step halving, so the log-likelihood never
/// decreases between iterations. `start` warm-starts the coefficients.
pub(crate) fn fit_logistic_matrix(x: &DMatrix<f64>, t: &[u8], start: Option<&[f64]>) -> Result<LogisticFit> {
    let (n, k) = x.shape();
    if t.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", t.len())));
    }
    if n <= k {
        return Err(Error::Shape(format!("need n > k, got n={n}, k={k}")));
    }
    if t.iter().any(|&v| v > 1) {
        return Err(Error::Domain("treatment must be 0/1".into()));
    }
    let ones = t.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::Degenerate("treatment vector has a single class".into()));
    }

    let mut beta = match start {
        Some(s) if s.len() == k => DVector::from_column_slice(s),
        _ => DVector::zeros(k),
    };
    let cols: Vec<&[f64]> = x.as_slice().chunks_exact(n).collect();
    let mut eta = x * &beta;
    let mut p = vec![0.0; n];
    let mut cand_p = vec![0.0; n];
    let mut ll = evaluate(&eta, t, &mut p);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    let mut resid = vec![0.0; n];

    while iterations < MAX_ITER {
        iterations += 1;
        for i in 0..n {
            w[i] = p[i] * (1.0 - p[i]);
            resid[i] = f64::from(t[i]) - p[i];
        }
        let mut xtwx = DMatrix::<f64>::zeros(k, k);
        let mut score = DVector::<f64>::zeros(k);
        for a in 0..k {
            let ca = cols[a];
            score[a] = ca.iter().zip(&resid).map(|(xa, r)| xa * r).sum();
            for b in 0..=a {
                let cb = cols[b];
                let v: f64 = (0..n).map(|i| w[i] * ca[i] * cb[i]).sum();
                xtwx[(a, b)] = v;
                xtwx[(b, a)] = v;
            }
            xtwx[(a, a)] += RIDGE;
        }
        let step = match xtwx.cholesky() {
            Some(c) => c.solve(&score),
            None => return Err(Error::Degenerate("IRLS weighted normal equations are singular".into())),
        };

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let cand_eta = x * &cand;
            let cand_ll = evaluate(&cand_eta, t, &mut cand_p);
            if cand_ll >= ll {
                accepted = Some((cand, cand_eta, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_eta, cand_ll)) = accepted else {
            break;
        };
        let change = cand_ll - ll;
        beta = cand;
        eta = cand_eta;
        ll = cand_ll;
        std::mem::swap(&mut p, &mut cand_p);
        trace.push(ll);
        if beta.norm() > DIVERGENCE_NORM {
            return Err(Error::Separation { iterations });
        }
        if change < LL_TOL {
            break;
        }
    }

    // Every observation classified with a positive margin means the sample
    // is linearly separable and the MLE does not exist.
    let separated = eta
        .iter()
        .zip(t)
        .all(|(&e, &ti)| if ti == 1 { e > 0.0 } else { e < 0.0 });
    if separated {
        return Err(Error::Separation { iterations });
    }

    Ok(LogisticFit {
        coefs: beta.iter().copied().collect(),
        iterations,
        log_likelihood: trace,
    })
}

/// Fitted probabilities clipped to `[clip, 1 - clip]`.
pub fn predict_propensity(coefs: &[f64], x: &DesignMatrix, clip: f64) -> Result<Vec<f64>> {
    if coefs.len() != x.ncols() {
        return Err(Error::Shape(format!("{} coefficients for {} columns", coefs.len(), x.ncols())));
    }
    Ok(propensity_matrix(coefs, x.matrix(), clip))
}

pub(crate) fn propensity_matrix(coefs: &[f64], x: &DMatrix<f64>, clip: f64) -> Vec<f64> {
    let beta = DVector::from_column_slice(coefs);
    (x * beta)
        .iter()
        .map(|&e| sigmoid(e).clamp(clip, 1.0 - clip))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design(xs: &[f64]) -> DesignMatrix {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        DesignMatrix::with_intercept(&["x"], &rows).unwrap()
    }

    #[test]
    fn perfect_predictor_is_separation() {
        let xs: Vec<f64> = (0..40).map(|i| f64::from(i % 2 == 0)).collect();
        let t: Vec<u8> = xs.iter().map(|&v| v as u8).collect();
        assert!(matches!(fit_logistic(&design(&xs), &t), Err(Error::Separation { .. })));
    }

    #[test]
    fn single_class_is_degenerate() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        assert!(matches!(fit_logistic(&design(&xs), &[1; 10]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn hand_fit_overlap_case() {
        // x=0: 1 of 4 treated; x=1: 3 of 4 treated -> MLE slope log(9), intercept -log(3)
        let xs = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let t = [1, 0, 0, 0, 1, 1, 1, 0];
        let fit = fit_logistic(&design(&xs), &t).unwrap();
        assert!((fit.coefs[0] + 3f64.ln()).abs() < 1e-6, "{:?}", fit.coefs);
        assert!((fit.coefs[1] - 9f64.ln()).abs() < 1e-6);
        assert!(fit.log_likelihood.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn propensity_predictions() {
        let x = design(&[0.0, 1.0, -2.0]);
        assert_eq!(predict_propensity(&[0.0, 0.0], &x, DEFAULT_CLIP).unwrap(), vec![0.5; 3]);
        let hi = predict_propensity(&[50.0, 0.0], &x, DEFAULT_CLIP).unwrap();
        assert!(hi.iter().all(|&p| p == 1.0 - DEFAULT_CLIP));
        let p = predict_propensity(&[0.3, -0.7], &x, DEFAULT_CLIP).unwrap();
        let hand = [1.0 / (1.0 + (-0.3f64).exp()), 1.0 / (1.0 + 0.4f64.exp()), 1.0 / (1.0 + (-1.7f64).exp())];
        for (a, b) in p.iter().zip(hand) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
