//! Randomized validity checks of unbounded IVARs.
//!
//! [`run_probe_suite`] applies the exact finite auto-calibration probe to
//! many random bags, and [`coverage_experiment`] estimates how often
//! Winsorizing a fresh test label changes it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::isotonic::ScoredExample;
use crate::vennabers::{validity_probe, winsorized_test_label};
use crate::{Error, Result};

/// A random bag of `size` examples. Scores and labels are drawn either from
/// small integer grids (so ties are common) or from continuous laws.
pub fn random_bag(rng: &mut impl Rng, size: usize) -> Vec<ScoredExample> {
    let tied_scores = rng.random_bool(0.5);
    let tied_labels = rng.random_bool(0.5);
    (0..size)
        .map(|_| {
            let score = if tied_scores {
                rng.random_range(0..4) as f64
            } else {
                StandardNormal.sample(rng)
            };
            let label = if tied_labels {
                rng.random_range(-3..=3) as f64
            } else {
                let z: f64 = StandardNormal.sample(rng);
                2.0 * z + score
            };
            ScoredExample::new(score, label)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSummary {
    pub bags: usize,
    /// Largest `|mean Winsorized label - selector|` over all groups.
    pub max_calibration_gap: f64,
    /// Intervals with `lower > upper`.
    pub ordering_violations: usize,
    /// Total number of selector groups inspected.
    pub groups: usize,
}

/// Probes `bags` random bags whose calibration size `k` is uniform on
/// `[2m + 1, max_k]`; each bag holds `k + 1` examples.
pub fn run_probe_suite(bags: usize, max_k: usize, m: usize, seed: u64) -> Result<ProbeSummary> {
    if m == 0 || max_k < 2 * m + 1 {
        return Err(Error::InvalidParameter(format!(
            "max_k = {max_k} leaves no valid calibration size for m = {m}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = ProbeSummary {
        bags,
        max_calibration_gap: 0.0,
        ordering_violations: 0,
        groups: 0,
    };
    for _ in 0..bags {
        let k = rng.random_range(2 * m + 1..=max_k);
        let bag = random_bag(&mut rng, k + 1);
        let report = validity_probe(&bag, m)?;
        summary.max_calibration_gap = summary
            .max_calibration_gap
            .max(report.max_calibration_gap());
        summary.ordering_violations += report
            .intervals
            .iter()
            .filter(|(_, iv)| iv.lower > iv.upper)
            .count();
        summary.groups += report.groups.len();
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageEstimate {
    pub draws: usize,
    pub changed: usize,
    /// Nominal bound `2m / (k + 1)` on the change probability.
    pub bound: f64,
}

impl CoverageEstimate {
    pub fn rate(&self) -> f64 {
        self.changed as f64 / self.draws as f64
    }

    /// Binomial standard error at the nominal bound.
    pub fn standard_error(&self) -> f64 {
        (self.bound * (1.0 - self.bound) / self.draws as f64).sqrt()
    }
}

/// Monte Carlo estimate of `P(Y ≠ Y')` where `Y'` is a fresh label
/// Winsorized against `k` IID calibration labels.
pub fn coverage_experiment(
    k: usize,
    m: usize,
    draws: usize,
    seed: u64,
) -> Result<CoverageEstimate> {
    if draws == 0 {
        return Err(Error::InvalidParameter("draws must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cal = vec![0.0; k];
    let mut changed = 0;
    for _ in 0..draws {
        cal.iter_mut()
            .for_each(|v| *v = StandardNormal.sample(&mut rng));
        let y: f64 = StandardNormal.sample(&mut rng);
        if winsorized_test_label(&cal, y, m)? != y {
            changed += 1;
        }
    }
    Ok(CoverageEstimate {
        draws,
        changed,
        bound: 2.0 * m as f64 / (k + 1) as f64,
    })
}
