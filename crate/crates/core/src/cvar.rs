//! Cross Venn–Abers regressors.
//!
//! The training set is cut into `K` folds; each fold in turn calibrates an
//! IVAR whose base model is trained on the other folds. A prediction merges
//! every fold's interval into a point (with that fold's own anchors) and
//! averages the `K` points.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::Regressor;
use crate::merge::{MergeInput, MergeMode};
use crate::vennabers::{CalibrationMode, FittedIvar};
use crate::{Error, Result};

/// Fold count used in the reference experiments.
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvarConfig {
    pub folds: usize,
    pub mode: CalibrationMode,
    pub merge: MergeMode,
    pub fold_seed: u64,
}

impl CvarConfig {
    pub fn unbounded(m: usize, fold_seed: u64) -> Self {
        Self {
            folds: DEFAULT_FOLDS,
            mode: CalibrationMode::Unbounded { m },
            merge: MergeMode::Approx,
            fold_seed,
        }
    }
}

/// Random permutation of `0..n` sliced into `folds` contiguous parts whose
/// sizes differ by at most one (larger parts first). Indices within a fold
/// are ascending.
pub fn assign_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if n < folds {
        return Err(Error::TooFewExamples {
            available: n,
            folds,
            per_fold: 1,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut fold = perm[start..start + len].to_vec();
        fold.sort_unstable();
        out.push(fold);
        start += len;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct CvarModel {
    folds: Vec<FittedIvar>,
    fold_sizes: Vec<usize>,
    merge: MergeMode,
}

pub fn fit_cvar(
    rows: &[Vec<f64>],
    labels: &[f64],
    base: &dyn Regressor,
    cfg: &CvarConfig,
) -> Result<CvarModel> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    cfg.mode.validate()?;
    let per_fold = cfg.mode.min_calibration_size();
    if cfg.folds >= 2 && rows.len() < cfg.folds * per_fold {
        return Err(Error::TooFewExamples {
            available: rows.len(),
            folds: cfg.folds,
            per_fold,
        });
    }
    let assignment = assign_folds(rows.len(), cfg.folds, cfg.fold_seed)?;
    let mut fold_of = vec![0usize; rows.len()];
    for (f, idx) in assignment.iter().enumerate() {
        idx.iter().for_each(|&i| fold_of[i] = f);
    }

    let folds = (0..cfg.folds)
        .into_par_iter()
        .map(|f| {
            let (mut train_rows, mut train_labels) = (Vec::new(), Vec::new());
            for i in (0..rows.len()).filter(|&i| fold_of[i] != f) {
                train_rows.push(rows[i].clone());
                train_labels.push(labels[i]);
            }
            let rule = base.fit(&train_rows, &train_labels)?;
            let cal_rows: Vec<Vec<f64>> = assignment[f].iter().map(|&i| rows[i].clone()).collect();
            let cal_labels: Vec<f64> = assignment[f].iter().map(|&i| labels[i]).collect();
            FittedIvar::from_parts(rule, &cal_rows, &cal_labels, cfg.mode)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CvarModel {
        folds,
        fold_sizes: assignment.iter().map(Vec::len).collect(),
        merge: cfg.merge,
    })
}

impl CvarModel {
    pub fn folds(&self) -> &[FittedIvar] {
        &self.folds
    }

    pub fn fold_sizes(&self) -> &[usize] {
        &self.fold_sizes
    }

    pub fn merge_mode(&self) -> MergeMode {
        self.merge
    }

    /// Merged point of each fold's interval.
    pub fn fold_estimates(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.folds
            .iter()
            .map(|ivar| {
                let iv = ivar.predict_interval(x)?;
                let (y_low, y_high) = ivar.anchors();
                self.merge
                    .merge(&MergeInput::new(y_low, y_high, iv.lower, iv.upper))
            })
            .collect()
    }

    /// Arithmetic mean of the per-fold merged points.
    pub fn predict_point(&self, x: &[f64]) -> Result<f64> {
        let est = self.fold_estimates(x)?;
        Ok(est.iter().sum::<f64>() / est.len() as f64)
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.iter().map(|x| self.predict_point(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_folds() {
        let folds = assign_folds(100, 10, 1).unwrap();
        assert!(folds.iter().all(|f| f.len() == 10));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn balanced_remainder() {
        let sizes: Vec<usize> = assign_folds(103, 10, 1)
            .unwrap()
            .iter()
            .map(Vec::len)
            .collect();
        assert_eq!(sizes, vec![11, 11, 11, 10, 10, 10, 10, 10, 10, 10]);
    }

    #[test]
    fn folds_deterministic_per_seed() {
        assert_eq!(
            assign_folds(57, 4, 9).unwrap(),
            assign_folds(57, 4, 9).unwrap()
        );
        assert_ne!(
            assign_folds(57, 4, 9).unwrap(),
            assign_folds(57, 4, 10).unwrap()
        );
    }

    #[test]
    fn fold_errors() {
        assert!(assign_folds(10, 1, 0).is_err());
        assert!(assign_folds(3, 4, 0).is_err());
    }
}
