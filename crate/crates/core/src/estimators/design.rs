use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::population::{Deciles, Household};

/// Regression design with a leading intercept column.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    matrix: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    /// `rows` excludes the intercept, which is prepended.
    pub fn with_intercept(labels: &[&str], rows: &[Vec<f64>]) -> Result<Self> {
        let k = labels.len() + 1;
        let n = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() + 1 != k) {
            return Err(Error::Shape(format!("row of length {} for {} covariates", r.len(), k - 1)));
        }
        let matrix = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
        let mut all = vec!["intercept".to_string()];
        all.extend(labels.iter().map(|s| s.to_string()));
        Self::from_matrix(matrix, all)
    }

    pub fn from_matrix(matrix: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, k) = matrix.shape();
        if k == 0 || n <= k {
            return Err(Error::Shape(format!("need n > k >= 1, got n={n}, k={k}")));
        }
        if labels.len() != k {
            return Err(Error::Shape(format!("{} labels for {k} columns", labels.len())));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("design matrix has non-finite entries".into()));
        }
        if matrix.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::Shape("first column must be the intercept".into()));
        }
        Ok(DesignMatrix { matrix, labels })
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub(crate) fn select_rows(&self, idx: &[usize]) -> DMatrix<f64> {
        self.matrix.select_rows(idx)
    }
}

/// Household size, region, employment (employed, informal), education level
/// and income decile. Categoricals are one-hot with the lowest observed level
/// as reference; unobserved levels get no column.
pub fn covariate_design(pop: &[Household], deciles: &Deciles) -> Result<DesignMatrix> {
    let mut labels: Vec<String> = vec!["intercept".into(), "size".into(), "employed".into(), "informal".into()];
    let levels = |f: &dyn Fn(&Household) -> u8| {
        let mut v: Vec<u8> = pop.iter().map(f).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let regions = levels(&|h| h.region);
    let edu = levels(&|h| h.education);
    let decs: Vec<u8> = {
        let mut v: Vec<u8> = pop.iter().filter_map(|h| deciles.get(h.id)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    if decs.is_empty() && !pop.is_empty() {
        return Err(Error::Alignment("population ids missing from decile map".into()));
    }
    labels.extend(regions.iter().skip(1).map(|r| format!("region_{r}")));
    labels.extend(edu.iter().skip(1).map(|e| format!("education_{e}")));
    labels.extend(decs.iter().skip(1).map(|d| format!("decile_{d}")));

    let k = labels.len();
    let mut m = DMatrix::zeros(pop.len(), k);
    for (i, h) in pop.iter().enumerate() {
        let d = deciles
            .get(h.id)
            .ok_or_else(|| Error::Alignment(format!("no decile for id {}", h.id)))?;
        m[(i, 0)] = 1.0;
        m[(i, 1)] = f64::from(h.size);
        m[(i, 2)] = f64::from(h.employed);
        m[(i, 3)] = f64::from(h.informal);
        let mut col = 4;
        for (levels, value) in [(&regions, h.region), (&edu, h.education), (&decs, d)] {
            for &lvl in levels.iter().skip(1) {
                if value == lvl {
                    m[(i, col)] = 1.0;
                }
                col += 1;
            }
        }
    }
    DesignMatrix::from_matrix(m, labels)
}
