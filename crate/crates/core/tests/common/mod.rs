//! Slow, literal reference implementations used as test oracles.
#![allow(dead_code)]

use rand::Rng;

/// Isotonic regression by repeated scan-and-merge: tied scores start in one
/// block, then the first adjacent violating pair is merged and the scan
/// restarts, until no violation is left. Returns the fit in input order.
pub fn naive_isotonic(points: &[(f64, f64)]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].0.partial_cmp(&points[b].0).unwrap());

    // (members, label sum)
    let mut blocks: Vec<(Vec<usize>, f64)> = Vec::new();
    for &i in &order {
        match blocks.last_mut() {
            Some((members, sum)) if points[members[0]].0 == points[i].0 => {
                members.push(i);
                *sum += points[i].1;
            }
            _ => blocks.push((vec![i], points[i].1)),
        }
    }
    let mean = |b: &(Vec<usize>, f64)| b.1 / b.0.len() as f64;
    loop {
        let violation =
            (0..blocks.len().saturating_sub(1)).find(|&j| mean(&blocks[j]) > mean(&blocks[j + 1]));
        let Some(j) = violation else { break };
        let (members, sum) = blocks.remove(j + 1);
        blocks[j].0.extend(members);
        blocks[j].1 += sum;
    }
    let mut fit = vec![0.0; points.len()];
    for b in &blocks {
        let v = mean(b);
        for &i in &b.0 {
            fit[i] = v;
        }
    }
    fit
}

/// Fit at the test point after appending `(r, pseudo)` to the calibration set.
pub fn naive_extended_fit(scores: &[f64], labels: &[f64], r: f64, pseudo: f64) -> f64 {
    let mut points: Vec<(f64, f64)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    points.push((r, pseudo));
    *naive_isotonic(&points).last().unwrap()
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut s = values.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    s
}

/// Clamps every label into `[low, high]`.
fn clip(labels: &[f64], low: f64, high: f64) -> Vec<f64> {
    labels
        .iter()
        .map(|&y| {
            if y < low {
                low
            } else if y > high {
                high
            } else {
                y
            }
        })
        .collect()
}

/// Unbounded IVAR interval at `r`, executed step by step: Winsorize for the
/// upper fit, fit with `(r, y^*)`, Winsorize for the lower fit, fit with
/// `(r, y_*)`.
pub fn literal_unbounded_interval(scores: &[f64], labels: &[f64], m: usize, r: f64) -> (f64, f64) {
    let k = labels.len();
    let s = sorted(labels);
    // Upper fit: m smallest -> (m+1)th smallest, m-1 largest -> mth largest.
    let (low_a, high_a) = (s[m], s[k - m]);
    let upper = naive_extended_fit(scores, &clip(labels, low_a, high_a), r, high_a);
    // Lower fit: m largest -> (m+1)th largest, m-1 smallest -> mth smallest.
    let (low_b, high_b) = (s[m - 1], s[k - m - 1]);
    let lower = naive_extended_fit(scores, &clip(labels, low_b, high_b), r, low_b);
    (lower, upper)
}

/// Bounded IVAR interval at `r`.
pub fn literal_bounded_interval(
    scores: &[f64],
    labels: &[f64],
    c_low: f64,
    c_high: f64,
    r: f64,
) -> (f64, f64) {
    (
        naive_extended_fit(scores, labels, r, c_low),
        naive_extended_fit(scores, labels, r, c_high),
    )
}

/// Draws `k` values; with probability `tie_prob` they come from a small grid
/// so that ties are common.
pub fn random_values(rng: &mut impl Rng, k: usize, tie_prob: f64, scale: f64) -> Vec<f64> {
    let tied = rng.random_bool(tie_prob);
    (0..k)
        .map(|_| {
            if tied {
                rng.random_range(-3..=3) as f64 * scale
            } else {
                rng.random_range(-1.0..1.0) * 3.0 * scale
            }
        })
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
