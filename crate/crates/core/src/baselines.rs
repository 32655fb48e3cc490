//! Base regressors and feature standardization.
//!
//! Every trainer here is deterministic. Linear models are solved through a
//! thin SVD of the centred design matrix, which gives the minimum-norm
//! solution when the design is rank deficient.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Ridge penalty used when none is given.
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1.0;
/// Neighbour count used when none is given.
pub const DEFAULT_NEIGHBORS: usize = 10;

/// A trained point regressor `R: X -> R`.
pub trait PredictionRule: Send + Sync + fmt::Debug {
    fn n_features(&self) -> usize;

    /// Prediction for a single object; `x.len()` must equal `n_features()`.
    fn predict(&self, x: &[f64]) -> f64;

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(())
    }
}

/// Something that turns a training sample into a [`PredictionRule`].
pub trait Regressor: Send + Sync {
    fn fit(&self, rows: &[Vec<f64>], labels: &[f64]) -> Result<Arc<dyn PredictionRule>>;

    fn name(&self) -> String;
}

fn check_training(rows: &[Vec<f64>], labels: &[f64]) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter("no training rows".into()));
    }
    if rows.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let width = rows[0].len();
    for row in rows {
        if row.len() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: row.len(),
            });
        }
    }
    if rows.iter().flatten().chain(labels).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(width)
}

/// `intercept + coef · x`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRule {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl PredictionRule for LinearRule {
    fn n_features(&self) -> usize {
        self.coef.len()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }
}

/// Penalised least squares with an unpenalised intercept; `lambda = 0` is
/// ordinary least squares.
fn fit_linear(rows: &[Vec<f64>], labels: &[f64], lambda: f64) -> Result<LinearRule> {
    let d = check_training(rows, labels)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "ridge penalty must be a non-negative number, got {lambda}"
        )));
    }
    let n = rows.len();
    let nf = n as f64;
    let mut means = vec![0.0; d];
    for row in rows {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= nf);
    let y_mean = labels.iter().sum::<f64>() / nf;

    if d == 0 {
        return Ok(LinearRule {
            intercept: y_mean,
            coef: Vec::new(),
        });
    }

    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - means[j]);
    let y = DVector::from_iterator(n, labels.iter().map(|v| v - y_mean));
    let svd = x.svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V^T requested");
    let s_max = svd.singular_values.max();
    let cutoff = s_max * (n.max(d) as f64) * f64::EPSILON;

    let uty = u.transpose() * &y;
    let mut scaled = DVector::zeros(svd.singular_values.len());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            scaled[i] = s * uty[i] / (s * s + lambda);
        }
    }
    let beta = v_t.transpose() * scaled;

    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - coef.iter().zip(&means).map(|(c, m)| c * m).sum::<f64>();
    Ok(LinearRule { intercept, coef })
}

/// Least squares with an intercept.
pub fn train_ols(rows: &[Vec<f64>], labels: &[f64]) -> Result<LinearRule> {
    fit_linear(rows, labels, 0.0)
}

/// Ridge regression; the intercept is not penalised.
pub fn train_ridge(rows: &[Vec<f64>], labels: &[f64], lambda: f64) -> Result<LinearRule> {
    fit_linear(rows, labels, lambda)
}

/// Mean label of the nearest training rows (Euclidean; ties by row index).
#[derive(Debug, Clone)]
pub struct KnnRule {
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    neighbors: usize,
}

impl PredictionRule for KnnRule {
    fn n_features(&self) -> usize {
        self.rows[0].len()
    }

    fn predict(&self, x: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.neighbors;
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        dist[..k].iter().map(|&(_, i)| self.labels[i]).sum::<f64>() / k as f64
    }
}

pub fn train_knn(rows: &[Vec<f64>], labels: &[f64], neighbors: usize) -> Result<KnnRule> {
    check_training(rows, labels)?;
    if neighbors == 0 || neighbors > rows.len() {
        return Err(Error::InvalidParameter(format!(
            "neighbors must be in 1..={}, got {neighbors}",
            rows.len()
        )));
    }
    Ok(KnnRule {
        rows: rows.to_vec(),
        labels: labels.to_vec(),
        neighbors,
    })
}

/// The built-in base regressors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseRegressor {
    Ols,
    Ridge { lambda: f64 },
    Knn { neighbors: usize },
}

impl BaseRegressor {
    pub fn ridge() -> Self {
        Self::Ridge {
            lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }

    pub fn knn() -> Self {
        Self::Knn {
            neighbors: DEFAULT_NEIGHBORS,
        }
    }

    /// Short name: `ols`, `ridge` or `knn`.
    pub fn short_name(&self) -> &'static str {
        match self {
            Self::Ols => "ols",
            Self::Ridge { .. } => "ridge",
            Self::Knn { .. } => "knn",
        }
    }

    /// Parses `ols`, `ridge` or `knn`, attaching the given hyperparameters.
    pub fn parse(name: &str, lambda: f64, neighbors: usize) -> Result<Self> {
        match name.trim() {
            "ols" | "linear" => Ok(Self::Ols),
            "ridge" => Ok(Self::Ridge { lambda }),
            "knn" => Ok(Self::Knn { neighbors }),
            other => Err(Error::InvalidParameter(format!(
                "unknown base regressor `{other}` (expected ols, ridge or knn)"
            ))),
        }
    }
}

impl Regressor for BaseRegressor {
    fn fit(&self, rows: &[Vec<f64>], labels: &[f64]) -> Result<Arc<dyn PredictionRule>> {
        Ok(match *self {
            Self::Ols => Arc::new(train_ols(rows, labels)?),
            Self::Ridge { lambda } => Arc::new(train_ridge(rows, labels, lambda)?),
            Self::Knn { neighbors } => Arc::new(train_knn(rows, labels, neighbors)?),
        })
    }

    fn name(&self) -> String {
        match self {
            Self::Ols => "ols".into(),
            Self::Ridge { lambda } => format!("ridge(lambda={lambda})"),
            Self::Knn { neighbors } => format!("knn(neighbors={neighbors})"),
        }
    }
}

/// Per-feature affine map fitted on training rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

/// Column means and population standard deviations; a zero deviation is
/// replaced by one so constant columns pass through centred.
pub fn fit_standardizer(rows: &[Vec<f64>]) -> Result<Standardizer> {
    let Some(first) = rows.first() else {
        return Err(Error::InvalidParameter("no rows to standardize".into()));
    };
    let d = first.len();
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for row in rows {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; d];
    for row in rows {
        for ((s, v), m) in vars.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let stddevs = vars
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(Standardizer { means, stddevs })
}

impl Standardizer {
    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.means)
            .zip(&self.stddevs)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

pub fn apply_standardizer(s: &Standardizer, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| s.transform_row(r)).collect()
}
