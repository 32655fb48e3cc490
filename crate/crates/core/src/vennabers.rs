//! Inductive Venn–Abers regressors.
//!
//! An IVAR splits off `k` calibration examples, trains the base regressor on
//! the rest and calibrates its scores with two isotonic fits, one extended
//! by the largest admissible label at the test score (`f^*`) and one by the
//! smallest (`f_*`). The regression interval is `[f_*(r), f^*(r)]`.
//!
//! In the unbounded setting the calibration labels are Winsorized first, with
//! deliberately asymmetric anchors for the two fits:
//!
//! | fit   | low anchor            | high anchor            | pseudo-label |
//! |-------|-----------------------|------------------------|--------------|
//! | upper | `(m+1)`th smallest    | `m`th largest          | high anchor  |
//! | lower | `m`th smallest        | `(m+1)`th largest      | low anchor   |

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::{PredictionRule, Regressor};
use crate::isotonic::{build_csd, pava_fit, scored, ExtendedCalibrator, ScoredExample};
use crate::{Error, Result};

/// Slack allowed when checking that a selector lies in its interval.
pub const SELECTOR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionInterval {
    pub lower: f64,
    pub upper: f64,
}

impl RegressionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64, tol: f64) -> bool {
        self.lower - tol <= y && y <= self.upper + tol
    }
}

/// How the calibration labels are bounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationMode {
    /// Winsorize the `m` most extreme labels on each side.
    Unbounded { m: usize },
    /// All labels are known to lie in `[lower, upper]`.
    Bounded { lower: f64, upper: f64 },
}

impl CalibrationMode {
    /// Smallest calibration set this mode can work with.
    pub fn min_calibration_size(&self) -> usize {
        match *self {
            Self::Unbounded { m } => 2 * m + 1,
            Self::Bounded { .. } => 1,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            Self::Unbounded { m } if m == 0 => Err(Error::InvalidWinsorization { m, k: 0 }),
            Self::Bounded { lower, upper }
                if lower.partial_cmp(&upper) != Some(std::cmp::Ordering::Less) =>
            {
                Err(Error::InvalidBounds { lower, upper })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvarConfig {
    /// `k`, the size of the calibration set.
    pub calibration_size: usize,
    pub mode: CalibrationMode,
    pub split_seed: u64,
}

impl IvarConfig {
    pub fn validate(&self) -> Result<()> {
        self.mode.validate()?;
        if let CalibrationMode::Unbounded { m } = self.mode {
            if 2 * m >= self.calibration_size {
                return Err(Error::InvalidWinsorization {
                    m,
                    k: self.calibration_size,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WinsorMode {
    UpperFit,
    LowerFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinsorizedLabels {
    pub labels: Vec<f64>,
    pub low_anchor: f64,
    pub high_anchor: f64,
    pub mode: WinsorMode,
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
}

/// Clamps the calibration labels to the anchors of the given fit.
pub fn winsorize(labels: &[f64], m: usize, mode: WinsorMode) -> Result<WinsorizedLabels> {
    let k = labels.len();
    if m == 0 || 2 * m >= k {
        return Err(Error::InvalidWinsorization { m, k });
    }
    if labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let sorted = sorted_copy(labels);
    let (low_anchor, high_anchor) = match mode {
        WinsorMode::UpperFit => (sorted[m], sorted[k - m]),
        WinsorMode::LowerFit => (sorted[m - 1], sorted[k - m - 1]),
    };
    Ok(WinsorizedLabels {
        labels: labels
            .iter()
            .map(|&y| y.clamp(low_anchor, high_anchor))
            .collect(),
        low_anchor,
        high_anchor,
        mode,
    })
}

/// Clamps a test label to `[Y_(m), Y_(k-m+1)]` of the calibration labels.
pub fn winsorized_test_label(calibration_labels: &[f64], y: f64, m: usize) -> Result<f64> {
    let k = calibration_labels.len();
    if m == 0 || 2 * m > k + 1 {
        return Err(Error::InvalidWinsorization { m, k });
    }
    if !y.is_finite() || calibration_labels.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let sorted = sorted_copy(calibration_labels);
    Ok(y.clamp(sorted[m - 1], sorted[k - m]))
}

/// Largest `m` with `2m / (k + 1) <= epsilon`, capped at `(k - 1) / 2`.
pub fn epsilon_to_m(epsilon: f64, k: usize) -> Result<usize> {
    let kp1 = (k + 1) as f64;
    if !(epsilon.is_finite() && epsilon >= 2.0 / kp1 * (1.0 - 1e-12) && epsilon < 1.0) {
        return Err(Error::EpsilonOutOfRange { epsilon, k });
    }
    // The relative nudge absorbs rounding in epsilon * (k + 1) for exact forms.
    let m = (epsilon * kp1 / 2.0 * (1.0 + 1e-12)).floor() as usize;
    let m = m.min(k.saturating_sub(1) / 2);
    if m == 0 {
        return Err(Error::EpsilonOutOfRange { epsilon, k });
    }
    Ok(m)
}

/// Draws `k` of `l` indices uniformly without replacement.
///
/// Returns `(proper_training, calibration)`, both ascending.
pub fn split_training(l: usize, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if k == 0 {
        return Err(Error::InvalidParameter(
            "calibration size must be positive".into(),
        ));
    }
    if l <= k {
        return Err(Error::CalibrationTooLarge {
            calibration: k,
            available: l,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut calibration = rand::seq::index::sample(&mut rng, l, k).into_vec();
    calibration.sort_unstable();
    let mut in_cal = vec![false; l];
    calibration.iter().for_each(|&i| in_cal[i] = true);
    let proper = (0..l).filter(|&i| !in_cal[i]).collect();
    Ok((proper, calibration))
}

/// The two extended calibrators of an IVAR, independent of the base model.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalCalibrator {
    upper: ExtendedCalibrator,
    lower: ExtendedCalibrator,
    anchors: (f64, f64),
}

impl IntervalCalibrator {
    /// Unbounded IVAR calibrators on raw calibration scores and labels.
    pub fn unbounded(scores: &[f64], labels: &[f64], m: usize) -> Result<Self> {
        let up = winsorize(labels, m, WinsorMode::UpperFit)?;
        let lo = winsorize(labels, m, WinsorMode::LowerFit)?;
        let upper =
            ExtendedCalibrator::upper(&build_csd(&scored(scores, &up.labels))?, up.high_anchor)?;
        let lower =
            ExtendedCalibrator::lower(&build_csd(&scored(scores, &lo.labels))?, lo.low_anchor)?;
        Ok(Self {
            upper,
            lower,
            anchors: (lo.low_anchor, up.high_anchor),
        })
    }

    /// Bounded IVAR calibrators; every label must lie in `[lower, upper]`.
    pub fn bounded(scores: &[f64], labels: &[f64], lower: f64, upper: f64) -> Result<Self> {
        CalibrationMode::Bounded { lower, upper }.validate()?;
        if let Some(&label) = labels.iter().find(|&&y| !(lower..=upper).contains(&y)) {
            return Err(Error::LabelOutOfBounds {
                label,
                lower,
                upper,
            });
        }
        let csd = build_csd(&scored(scores, labels))?;
        Ok(Self {
            upper: ExtendedCalibrator::upper(&csd, upper)?,
            lower: ExtendedCalibrator::lower(&csd, lower)?,
            anchors: (lower, upper),
        })
    }

    pub fn new(scores: &[f64], labels: &[f64], mode: CalibrationMode) -> Result<Self> {
        match mode {
            CalibrationMode::Unbounded { m } => Self::unbounded(scores, labels, m),
            CalibrationMode::Bounded { lower, upper } => {
                Self::bounded(scores, labels, lower, upper)
            }
        }
    }

    pub fn upper(&self) -> &ExtendedCalibrator {
        &self.upper
    }

    pub fn lower(&self) -> &ExtendedCalibrator {
        &self.lower
    }

    /// `(y_*, y^*)` used when merging: the lower fit's low anchor and the
    /// upper fit's high anchor (or the declared bounds).
    pub fn anchors(&self) -> (f64, f64) {
        self.anchors
    }

    pub fn interval(&self, r: f64) -> Result<RegressionInterval> {
        if !r.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(RegressionInterval {
            lower: self.lower.eval_unchecked(r),
            upper: self.upper.eval_unchecked(r),
        })
    }
}

/// A trained IVAR: base prediction rule plus the two calibrators.
#[derive(Debug, Clone)]
pub struct FittedIvar {
    rule: Arc<dyn PredictionRule>,
    calibrator: IntervalCalibrator,
    mode: CalibrationMode,
}

impl FittedIvar {
    /// Calibrates an already trained rule on the given calibration rows.
    pub fn from_parts(
        rule: Arc<dyn PredictionRule>,
        calibration_rows: &[Vec<f64>],
        calibration_labels: &[f64],
        mode: CalibrationMode,
    ) -> Result<Self> {
        let scores = calibration_rows
            .iter()
            .map(|x| {
                rule.check_dim(x)?;
                Ok(rule.predict(x))
            })
            .collect::<Result<Vec<f64>>>()?;
        let calibrator = IntervalCalibrator::new(&scores, calibration_labels, mode)?;
        Ok(Self {
            rule,
            calibrator,
            mode,
        })
    }

    pub fn rule(&self) -> &Arc<dyn PredictionRule> {
        &self.rule
    }

    pub fn calibrator(&self) -> &IntervalCalibrator {
        &self.calibrator
    }

    pub fn mode(&self) -> CalibrationMode {
        self.mode
    }

    pub fn anchors(&self) -> (f64, f64) {
        self.calibrator.anchors
    }

    /// `[f_*(R(x)), f^*(R(x))]`.
    pub fn predict_interval(&self, x: &[f64]) -> Result<RegressionInterval> {
        self.rule.check_dim(x)?;
        self.calibrator.interval(self.rule.predict(x))
    }
}

fn fit_ivar(
    rows: &[Vec<f64>],
    labels: &[f64],
    base: &dyn Regressor,
    cfg: &IvarConfig,
) -> Result<FittedIvar> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    cfg.validate()?;
    let (proper, calibration) = split_training(rows.len(), cfg.calibration_size, cfg.split_seed)?;
    let pick_rows = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>();
    let pick_labels = |idx: &[usize]| idx.iter().map(|&i| labels[i]).collect::<Vec<_>>();
    let rule = base.fit(&pick_rows(&proper), &pick_labels(&proper))?;
    FittedIvar::from_parts(
        rule,
        &pick_rows(&calibration),
        &pick_labels(&calibration),
        cfg.mode,
    )
}

/// Unbounded IVAR (Winsorized calibration labels).
pub fn fit_unbounded(
    rows: &[Vec<f64>],
    labels: &[f64],
    base: &dyn Regressor,
    cfg: &IvarConfig,
) -> Result<FittedIvar> {
    if !matches!(cfg.mode, CalibrationMode::Unbounded { .. }) {
        return Err(Error::InvalidParameter(
            "fit_unbounded needs an unbounded config".into(),
        ));
    }
    fit_ivar(rows, labels, base, cfg)
}

/// Bounded IVAR; every training label must lie within the declared bounds.
pub fn fit_bounded(
    rows: &[Vec<f64>],
    labels: &[f64],
    base: &dyn Regressor,
    cfg: &IvarConfig,
) -> Result<FittedIvar> {
    let CalibrationMode::Bounded { lower, upper } = cfg.mode else {
        return Err(Error::InvalidParameter(
            "fit_bounded needs a bounded config".into(),
        ));
    };
    cfg.mode.validate()?;
    if let Some(&label) = labels.iter().find(|&&y| !(lower..=upper).contains(&y)) {
        return Err(Error::LabelOutOfBounds {
            label,
            lower,
            upper,
        });
    }
    fit_ivar(rows, labels, base, cfg)
}

/// Examples sharing one selector value.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorGroup {
    pub selector: f64,
    pub mean_label: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Groups in ascending selector order.
    pub groups: Vec<SelectorGroup>,
    /// Selector and IVAR interval for each choice of test element.
    pub intervals: Vec<(f64, RegressionInterval)>,
}

impl ProbeReport {
    /// Largest `|mean Winsorized label - selector|` over the groups.
    pub fn max_calibration_gap(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| (g.mean_label - g.selector).abs())
            .fold(0.0, f64::max)
    }
}

/// Exact finite check of auto-calibration for one bag of `k + 1` examples.
///
/// Each element in turn plays the test example. The symmetric recipe
/// Winsorizes the whole bag (the `m` largest labels to the `(m+1)`th largest,
/// the `m` smallest to the `(m+1)`th smallest) and fits isotonic regression to
/// it; the selector is the fit at the test score. The recipe does not depend
/// on which element is the test one, so one fit serves all `k + 1` choices.
/// The test label is Winsorized against the other `k` labels. Selectors are
/// grouped by value and the mean Winsorized label per group is reported.
///
/// Fails with [`Error::SelectorOutsideInterval`] if a selector falls outside
/// the IVAR interval built on the remaining `k` elements.
pub fn validity_probe(bag: &[ScoredExample], m: usize) -> Result<ProbeReport> {
    let size = bag.len();
    // The IVAR on the remaining k = size - 1 elements needs 2m < k.
    if m == 0 || 2 * m >= size.saturating_sub(1) {
        return Err(Error::BagTooSmall { size, m });
    }
    let labels: Vec<f64> = bag.iter().map(|e| e.label).collect();
    let sorted = sorted_copy(&labels);
    let (lo, hi) = (sorted[m], sorted[size - 1 - m]);
    let recipe: Vec<ScoredExample> = bag
        .iter()
        .map(|e| ScoredExample::new(e.score, e.label.clamp(lo, hi)))
        .collect();
    let selectors = pava_fit(&recipe)?.fitted_values();

    let mut per_test = Vec::with_capacity(size);
    let mut intervals = Vec::with_capacity(size);
    for t in 0..size {
        let rest: Vec<usize> = (0..size).filter(|&i| i != t).collect();
        let rest_scores: Vec<f64> = rest.iter().map(|&i| bag[i].score).collect();
        let rest_labels: Vec<f64> = rest.iter().map(|&i| bag[i].label).collect();
        let y_w = winsorized_test_label(&rest_labels, bag[t].label, m)?;
        let interval =
            IntervalCalibrator::unbounded(&rest_scores, &rest_labels, m)?.interval(bag[t].score)?;
        let s = selectors[t];
        if !interval.contains(s, SELECTOR_TOLERANCE) {
            return Err(Error::SelectorOutsideInterval {
                selector: s,
                lower: interval.lower,
                upper: interval.upper,
            });
        }
        per_test.push((s, y_w));
        intervals.push((s, interval));
    }

    per_test.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<SelectorGroup> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for (s, y) in per_test {
        match groups.last_mut() {
            Some(g) if g.selector == s => {
                g.count += 1;
                *sums.last_mut().unwrap() += y;
            }
            _ => {
                groups.push(SelectorGroup {
                    selector: s,
                    mean_label: 0.0,
                    count: 1,
                });
                sums.push(y);
            }
        }
    }
    for (g, s) in groups.iter_mut().zip(sums) {
        g.mean_label = s / g.count as f64;
    }
    Ok(ProbeReport { groups, intervals })
}
