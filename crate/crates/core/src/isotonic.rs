//! Weighted isotonic regression and the extended calibrators `f^*` / `f_*`.
//!
//! The calibration pairs are first collapsed into a cumulative sum diagram
//! (CSD): distinct scores `r'_1 < … < r'_{k'}` with multiplicities `w_j`, and
//! the points `P_0 = (0, 0)`, `P_j = P_{j-1} + (w_j, Σ labels at r'_j)`.
//! The isotonic fit is the slope sequence of the greatest convex minorant of
//! that polyline.
//!
//! An extended calibrator answers "what would the isotonic fit be at `r` if
//! `(r, y)` were added to the calibration set", for a fixed pseudo-label `y`
//! and arbitrary `r`. For the upper calibrator the pseudo-label is at least
//! every calibration label. Write `L_a = P_a - (1, y)`. Inserting the test
//! point after the `j`th distinct score gives (up to translation) the diagram
//! `L_0, …, L_j, P_j, …, P_{k'}`, and the fitted value at the test point is
//! the slope of the lower hull over `(W_j - 1, W_j)`. Because `y` dominates
//! every label, `P_{j-1}` always lies above the segment `L_{j-1} L_j`, so the
//! hull for `j` is the hull for `j - 1` with the single point `L_j` inserted.
//! Insertions happen at increasing abscissae, so one left-to-right sweep with
//! two stacks produces every value in amortised `O(k')`. The starting hull is
//! the hull of the CSD with `P_{-1} = (-1, -y)` prepended.
//!
//! A test score tied with `r'_j` pools into the `j`th point; the resulting
//! value equals the one for the gap just below `r'_j`. Hence
//! `f^*(r) = V[#{j : r'_j < r}]` and evaluation is a single binary search.
//! The lower calibrator is the mirror image (scores and labels negated),
//! which corresponds to appending `P_{k'+1} = P_{k'} + (1, y)`.

use std::ops::Range;

use crate::{Error, Result};

/// Tolerance used when checking a pseudo-label against the pooled labels.
const PSEUDO_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredExample {
    pub score: f64,
    pub label: f64,
}

impl ScoredExample {
    pub fn new(score: f64, label: f64) -> Self {
        Self { score, label }
    }
}

/// Builds scored examples from parallel score and label slices.
pub fn scored(scores: &[f64], labels: &[f64]) -> Vec<ScoredExample> {
    assert_eq!(
        scores.len(),
        labels.len(),
        "scores and labels differ in length"
    );
    scores
        .iter()
        .zip(labels)
        .map(|(&score, &label)| ScoredExample { score, label })
        .collect()
}

/// Deduplicated calibration scores and their cumulative sum diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct CsdSummary {
    distinct_scores: Vec<f64>,
    weights: Vec<usize>,
    mean_labels: Vec<f64>,
    cum_points: Vec<(f64, f64)>,
}

impl CsdSummary {
    /// Ascending distinct scores `r'_1 < … < r'_{k'}`.
    pub fn distinct_scores(&self) -> &[f64] {
        &self.distinct_scores
    }

    /// Multiplicity of each distinct score.
    pub fn weights(&self) -> &[usize] {
        &self.weights
    }

    /// Mean label at each distinct score.
    pub fn mean_labels(&self) -> &[f64] {
        &self.mean_labels
    }

    /// `P_0, …, P_{k'}` as `(cumulative weight, cumulative label sum)`.
    pub fn cum_points(&self) -> &[(f64, f64)] {
        &self.cum_points
    }

    /// `k'`, the number of distinct scores.
    pub fn len(&self) -> usize {
        self.distinct_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distinct_scores.is_empty()
    }

    /// `k`, the number of calibration examples summarised.
    pub fn total_weight(&self) -> usize {
        self.weights.iter().sum()
    }

    fn max_mean_label(&self) -> f64 {
        self.mean_labels
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    fn min_mean_label(&self) -> f64 {
        self.mean_labels
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Cumulative points of the reflected problem: scores reversed, labels
    /// negated.
    fn mirrored_cum_points(&self) -> Vec<(f64, f64)> {
        let (w_total, s_total) = *self.cum_points.last().expect("non-empty CSD");
        self.cum_points
            .iter()
            .rev()
            .map(|&(w, s)| (w_total - w, s - s_total))
            .collect()
    }
}

fn validate(examples: &[ScoredExample]) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    if examples
        .iter()
        .any(|e| !e.score.is_finite() || !e.label.is_finite())
    {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Indices of `examples` sorted by score (stable).
fn score_order(examples: &[ScoredExample]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by(|&a, &b| examples[a].score.total_cmp(&examples[b].score));
    order
}

/// Sorts the examples by score and merges equal scores into weighted points.
pub fn build_csd(examples: &[ScoredExample]) -> Result<CsdSummary> {
    validate(examples)?;
    Ok(csd_from_order(examples, &score_order(examples)))
}

fn csd_from_order(examples: &[ScoredExample], order: &[usize]) -> CsdSummary {
    let mut distinct_scores = Vec::new();
    let mut weights = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for &i in order {
        let e = examples[i];
        if distinct_scores.last() == Some(&e.score) {
            *weights.last_mut().unwrap() += 1;
            *sums.last_mut().unwrap() += e.label;
        } else {
            distinct_scores.push(e.score);
            weights.push(1);
            sums.push(e.label);
        }
    }

    let mut cum_points = Vec::with_capacity(weights.len() + 1);
    cum_points.push((0.0, 0.0));
    let (mut cw, mut cs) = (0.0, 0.0);
    for (&w, &s) in weights.iter().zip(&sums) {
        cw += w as f64;
        cs += s;
        cum_points.push((cw, cs));
    }
    let mean_labels = weights
        .iter()
        .zip(&sums)
        .map(|(&w, &s)| s / w as f64)
        .collect();

    CsdSummary {
        distinct_scores,
        weights,
        mean_labels,
        cum_points,
    }
}

/// Least-squares non-decreasing fit of labels against scores.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotonicFit {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    block_ranges: Vec<Range<usize>>,
    /// `order[p]` is the input index of the example at sorted position `p`.
    order: Vec<usize>,
}

impl IsotonicFit {
    /// Smallest score of each solution block.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Fitted value of each block, non-decreasing.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Positions (in score-sorted order) of the examples pooled by each block.
    pub fn block_ranges(&self) -> &[Range<usize>] {
        &self.block_ranges
    }

    /// Input index of the example at each score-sorted position.
    pub fn sorted_order(&self) -> &[usize] {
        &self.order
    }

    /// Fitted value for every input example, in input order.
    pub fn fitted_values(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.order.len()];
        for (range, &v) in self.block_ranges.iter().zip(&self.values) {
            for p in range.clone() {
                out[self.order[p]] = v;
            }
        }
        out
    }

    /// Evaluates the fitted step function, taking the value of the last block
    /// starting at or below `score` (the first block below the data range).
    pub fn value_at(&self, score: f64) -> f64 {
        let idx = self.breakpoints.partition_point(|&b| b <= score);
        self.values[idx.saturating_sub(1)]
    }
}

/// Pool-adjacent-violators on weighted points; returns `(first point, weight,
/// sum)` per block.
fn pool_adjacent_violators(weights: &[f64], sums: &[f64]) -> Vec<(usize, f64, f64)> {
    let mut blocks: Vec<(usize, f64, f64)> = Vec::with_capacity(weights.len());
    for (j, (&w, &s)) in weights.iter().zip(sums).enumerate() {
        let (mut start, mut bw, mut bs) = (j, w, s);
        while let Some(&(ps, pw, psum)) = blocks.last() {
            if psum / pw > bs / bw {
                blocks.pop();
                start = ps;
                bw += pw;
                bs += psum;
            } else {
                break;
            }
        }
        blocks.push((start, bw, bs));
    }
    blocks
}

/// Fits isotonic regression with the pool-adjacent-violators algorithm.
///
/// Tied scores are pooled into one weighted point before any violator is
/// merged, so the fit is a function of the score.
pub fn pava_fit(examples: &[ScoredExample]) -> Result<IsotonicFit> {
    validate(examples)?;
    let order = score_order(examples);
    let csd = csd_from_order(examples, &order);

    let weights: Vec<f64> = csd.weights.iter().map(|&w| w as f64).collect();
    let sums: Vec<f64> = csd.cum_points.windows(2).map(|p| p[1].1 - p[0].1).collect();
    let blocks = pool_adjacent_violators(&weights, &sums);

    let mut breakpoints = Vec::with_capacity(blocks.len());
    let mut values = Vec::with_capacity(blocks.len());
    let mut block_ranges = Vec::with_capacity(blocks.len());
    for (b, &(start, w, s)) in blocks.iter().enumerate() {
        let end_point = blocks.get(b + 1).map_or(csd.len(), |next| next.0);
        breakpoints.push(csd.distinct_scores[start]);
        values.push(s / w);
        block_ranges.push(csd.cum_points[start].0 as usize..csd.cum_points[end_point].0 as usize);
    }

    Ok(IsotonicFit {
        breakpoints,
        values,
        block_ranges,
        order,
    })
}

/// Which extreme pseudo-label a calibrator was extended with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

type Point = (f64, f64);

/// Cross product of `b - a` and `c - a`; positive for a counter-clockwise turn.
fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

fn slope(a: Point, b: Point) -> f64 {
    (b.1 - a.1) / (b.0 - a.0)
}

/// Lower convex hull of points with strictly increasing abscissae.
fn lower_hull(points: &[Point]) -> Vec<Point> {
    let mut hull: Vec<Point> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull
}

/// Runs the insertion sweep for an upper-type extension.
///
/// `cum` holds `P_0, …, P_{k'}`; `pseudo` must be at least every segment
/// slope. Returns the hull corners of the extended diagram and the value of
/// the extended fit for each of the `k' + 1` gaps.
fn upper_sweep(cum: &[Point], pseudo: f64) -> (Vec<Point>, Vec<f64>) {
    let shifted = |a: usize| (cum[a].0 - 1.0, cum[a].1 - pseudo);

    let mut extended = Vec::with_capacity(cum.len() + 1);
    extended.push(shifted(0));
    extended.extend_from_slice(cum);
    let corners = lower_hull(&extended);

    // `right` holds the hull vertices at or beyond the sweep position with the
    // leftmost one on top; `left` the vertices behind it, rightmost on top.
    let mut right: Vec<Point> = corners.iter().rev().copied().collect();
    let mut left: Vec<Point> = Vec::with_capacity(corners.len());
    left.push(right.pop().expect("hull has at least two vertices"));

    let mut values = Vec::with_capacity(cum.len());
    values.push(slope(left[left.len() - 1], right[right.len() - 1]));

    for j in 1..cum.len() {
        let p = shifted(j);
        while right[right.len() - 1].0 < p.0 {
            left.push(right.pop().unwrap());
        }
        // A vertex sharing the abscissa of `p` sits on or above it.
        if right.len() >= 2 && right[right.len() - 1].0 == p.0 {
            right.pop();
        }
        let (a, b) = (left[left.len() - 1], right[right.len() - 1]);
        if cross(a, b, p) < 0.0 {
            while left.len() >= 2 && cross(left[left.len() - 2], left[left.len() - 1], p) <= 0.0 {
                left.pop();
            }
            while right.len() >= 2
                && cross(p, right[right.len() - 1], right[right.len() - 2]) <= 0.0
            {
                right.pop();
            }
            left.push(p);
        }
        values.push(slope(left[left.len() - 1], right[right.len() - 1]));
    }
    (corners, values)
}

/// One extended isotonic calibrator (`f^*` or `f_*`), evaluable at any score
/// in `O(log k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedCalibrator {
    side: Side,
    pseudo_label: f64,
    scores: Vec<f64>,
    values: Vec<f64>,
    corners: Vec<Point>,
}

impl ExtendedCalibrator {
    /// `f^*`: the fit extended with `(r, pseudo_label)`, where the pseudo-label
    /// is not below any pooled calibration label.
    pub fn upper(csd: &CsdSummary, pseudo_label: f64) -> Result<Self> {
        if !pseudo_label.is_finite() {
            return Err(Error::NonFinite);
        }
        let max_label = csd.max_mean_label();
        if pseudo_label < max_label - PSEUDO_SLACK * max_label.abs().max(1.0) {
            return Err(Error::UpperPseudoTooSmall {
                pseudo: pseudo_label,
                max_label,
            });
        }
        let (corners, values) = upper_sweep(&csd.cum_points, pseudo_label);
        Ok(Self {
            side: Side::Upper,
            pseudo_label,
            scores: csd.distinct_scores.clone(),
            values,
            corners,
        })
    }

    /// `f_*`: the fit extended with `(r, pseudo_label)`, where the pseudo-label
    /// is not above any pooled calibration label.
    pub fn lower(csd: &CsdSummary, pseudo_label: f64) -> Result<Self> {
        if !pseudo_label.is_finite() {
            return Err(Error::NonFinite);
        }
        let min_label = csd.min_mean_label();
        if pseudo_label > min_label + PSEUDO_SLACK * min_label.abs().max(1.0) {
            return Err(Error::LowerPseudoTooLarge {
                pseudo: pseudo_label,
                min_label,
            });
        }
        let (mirror_corners, mirror_values) =
            upper_sweep(&csd.mirrored_cum_points(), -pseudo_label);

        let (w_total, s_total) = *csd.cum_points.last().unwrap();
        let corners = mirror_corners
            .iter()
            .rev()
            .map(|&(x, y)| (w_total - x, s_total + y))
            .collect();
        // Mirror gap `g` (g distinct scores above r) is original gap `k' - g`.
        let values = mirror_values.iter().rev().map(|v| -v).collect();
        Ok(Self {
            side: Side::Lower,
            pseudo_label,
            scores: csd.distinct_scores.clone(),
            values,
            corners,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn pseudo_label(&self) -> f64 {
        self.pseudo_label
    }

    /// Corners of the extended diagram: `P_{-1}, …` for the upper side and
    /// `…, P_{k'+1}` for the lower side.
    pub fn corners(&self) -> &[(f64, f64)] {
        &self.corners
    }

    /// Value for each gap between distinct scores (`k' + 1` entries).
    pub fn gap_values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(self.eval_unchecked(r))
    }

    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        let idx = match self.side {
            Side::Upper => self.scores.partition_point(|&s| s < r),
            Side::Lower => self.scores.partition_point(|&s| s <= r),
        };
        self.values[idx]
    }
}

/// `f^*` and `f_*` built on the same calibration set.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratorPair {
    csd: CsdSummary,
    upper: ExtendedCalibrator,
    lower: ExtendedCalibrator,
}

/// Preprocesses a CSD into the two extended calibrators.
///
/// The upper pseudo-label must not be below any calibration label and the
/// lower one must not be above any; this is always the case for Winsorized
/// labels and for bounded labels.
pub fn build_calibrator_pair(
    csd: CsdSummary,
    y_pseudo_lower: f64,
    y_pseudo_upper: f64,
) -> Result<CalibratorPair> {
    if y_pseudo_lower > y_pseudo_upper {
        return Err(Error::PseudoLabelOrder {
            lower: y_pseudo_lower,
            upper: y_pseudo_upper,
        });
    }
    let upper = ExtendedCalibrator::upper(&csd, y_pseudo_upper)?;
    let lower = ExtendedCalibrator::lower(&csd, y_pseudo_lower)?;
    Ok(CalibratorPair { csd, upper, lower })
}

impl CalibratorPair {
    pub fn csd(&self) -> &CsdSummary {
        &self.csd
    }

    pub fn upper(&self) -> &ExtendedCalibrator {
        &self.upper
    }

    pub fn lower(&self) -> &ExtendedCalibrator {
        &self.lower
    }

    pub fn y_pseudo_upper(&self) -> f64 {
        self.upper.pseudo_label
    }

    pub fn y_pseudo_lower(&self) -> f64 {
        self.lower.pseudo_label
    }

    pub fn upper_corners(&self) -> &[(f64, f64)] {
        &self.upper.corners
    }

    pub fn lower_corners(&self) -> &[(f64, f64)] {
        &self.lower.corners
    }

    pub fn eval_upper(&self, r: f64) -> Result<f64> {
        self.upper.eval(r)
    }

    pub fn eval_lower(&self, r: f64) -> Result<f64> {
        self.lower.eval(r)
    }
}
