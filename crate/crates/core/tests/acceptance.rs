//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line for each and exits non-zero if any fails.

mod common;

use std::hint::black_box;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use ivar_core::baselines::{BaseRegressor, Regressor};
use ivar_core::bench::{run_bench, BenchConfig, Method};
use ivar_core::datagen::{DatasetSpec, Scenario};
use ivar_core::isotonic::{build_calibrator_pair, build_csd, pava_fit, scored, ScoredExample};
use ivar_core::merge::{merge_approx, merge_exact, MergeInput};
use ivar_core::probe::{coverage_experiment, random_bag};
use ivar_core::vennabers::{
    fit_unbounded, split_training, validity_probe, CalibrationMode, IntervalCalibrator, IvarConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Interval-ordering violations seen while checking criteria 1-4.
#[derive(Default)]
struct OrderingLedger {
    checked: usize,
    violations: usize,
}

impl OrderingLedger {
    fn record(&mut self, lower: f64, upper: f64) {
        self.checked += 1;
        if lower > upper {
            self.violations += 1;
        }
    }
}

fn oracle_equivalence(ledger: &mut OrderingLedger) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut worst, mut queries) = (0.0f64, 0usize);
    for _ in 0..1000 {
        let k = rng.random_range(1..=50);
        let scores = random_values(&mut rng, k, 0.5, 1.0);
        let labels = random_values(&mut rng, k, 0.5, 10.0);
        let max = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let (lo, hi) = if rng.random_bool(0.2) {
            (min, max)
        } else {
            (
                min - rng.random_range(0.0..20.0),
                max + rng.random_range(0.0..20.0),
            )
        };
        let pair =
            build_calibrator_pair(build_csd(&scored(&scores, &labels)).unwrap(), lo, hi).unwrap();
        let mut rs: Vec<f64> = scores.iter().take(5).copied().collect();
        rs.extend((0..10).map(|_| rng.random_range(-4.0..4.0)));
        for r in rs {
            let up = pair.eval_upper(r).unwrap();
            let low = pair.eval_lower(r).unwrap();
            let up_ref = naive_extended_fit(&scores, &labels, r, hi);
            let low_ref = naive_extended_fit(&scores, &labels, r, lo);
            worst = worst.max((up - up_ref).abs()).max((low - low_ref).abs());
            ledger.record(low, up);
            queries += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-9 && elapsed < Duration::from_secs(30),
        format!("1000 instances, {queries} queries, max abs diff {worst:.2e}, {elapsed:.2?}"),
    )
}

fn unbounded_equivalence(ledger: &mut OrderingLedger) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for inst in 0..200u64 {
        let l = rng.random_range(10..80);
        let d = rng.random_range(1..5);
        let rows: Vec<Vec<f64>> = (0..l)
            .map(|_| random_values(&mut rng, d, 0.2, 1.0))
            .collect();
        let labels: Vec<f64> = rows
            .iter()
            .map(|x| x.iter().sum::<f64>() + rng.random_range(-2.0..2.0))
            .collect();
        let k = rng.random_range(3..=(l - 3).min(50));
        let m = rng.random_range(1..=(k - 1) / 2);
        let base = match inst % 3 {
            0 => BaseRegressor::Ols,
            1 => BaseRegressor::Ridge { lambda: 0.5 },
            _ => BaseRegressor::Knn { neighbors: 2 },
        };
        let cfg = IvarConfig {
            calibration_size: k,
            mode: CalibrationMode::Unbounded { m },
            split_seed: inst,
        };
        let model = fit_unbounded(&rows, &labels, &base, &cfg).unwrap();
        let (proper, calibration) = split_training(l, k, inst).unwrap();
        let rule = base
            .fit(
                &proper.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>(),
                &proper.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
            )
            .unwrap();
        let cal_scores: Vec<f64> = calibration
            .iter()
            .map(|&i| rule.predict(&rows[i]))
            .collect();
        let cal_labels: Vec<f64> = calibration.iter().map(|&i| labels[i]).collect();
        for _ in 0..5 {
            let x = random_values(&mut rng, d, 0.0, 1.5);
            let iv = model.predict_interval(&x).unwrap();
            let (lo, hi) =
                literal_unbounded_interval(&cal_scores, &cal_labels, m, rule.predict(&x));
            worst = worst.max((iv.lower - lo).abs()).max((iv.upper - hi).abs());
            ledger.record(iv.lower, iv.upper);
        }
    }
    outcome(
        worst <= 1e-9,
        format!("200 instances, max abs diff {worst:.2e}"),
    )
}

fn clamp_to(y: f64, lo: f64, hi: f64) -> f64 {
    if y < lo {
        lo
    } else if y > hi {
        hi
    } else {
        y
    }
}

fn auto_calibration(ledger: &mut OrderingLedger) -> Outcome {
    let start = Instant::now();
    let m = 1;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut worst_gap, mut outside, mut groups, mut probe_disagreements) =
        (0.0f64, 0usize, 0usize, 0usize);
    for _ in 0..200 {
        let k = rng.random_range(2 * m + 1..=8);
        let bag: Vec<ScoredExample> = random_bag(&mut rng, k + 1);
        let size = bag.len();

        // Symmetric recipe on the whole bag.
        let mut sorted: Vec<f64> = bag.iter().map(|e| e.label).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (lo, hi) = (sorted[m], sorted[size - 1 - m]);
        let points: Vec<(f64, f64)> = bag
            .iter()
            .map(|e| (e.score, clamp_to(e.label, lo, hi)))
            .collect();
        let selectors = naive_isotonic(&points);

        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for t in 0..size {
            let rest: Vec<&ScoredExample> = bag
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != t)
                .map(|(_, e)| e)
                .collect();
            let rs: Vec<f64> = rest.iter().map(|e| e.score).collect();
            let rl: Vec<f64> = rest.iter().map(|e| e.label).collect();
            let mut rsorted = rl.clone();
            rsorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let y_w = clamp_to(bag[t].label, rsorted[m - 1], rsorted[k - m]);
            let (low, up) = literal_unbounded_interval(&rs, &rl, m, bag[t].score);
            ledger.record(low, up);
            if !(low - 1e-9 <= selectors[t] && selectors[t] <= up + 1e-9) {
                outside += 1;
            }
            pairs.push((selectors[t], y_w));
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut i = 0;
        while i < pairs.len() {
            let j = (i..pairs.len())
                .find(|&j| pairs[j].0 != pairs[i].0)
                .unwrap_or(pairs.len());
            let mean = pairs[i..j].iter().map(|p| p.1).sum::<f64>() / (j - i) as f64;
            worst_gap = worst_gap.max((mean - pairs[i].0).abs());
            groups += 1;
            i = j;
        }

        match validity_probe(&bag, m) {
            Ok(report) if report.max_calibration_gap() <= 1e-9 => {}
            _ => probe_disagreements += 1,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst_gap <= 1e-9
            && outside == 0
            && probe_disagreements == 0
            && elapsed < Duration::from_secs(60),
        format!(
            "200 bags, {groups} selector groups, max |E(Y'|S) - S| {worst_gap:.2e}, \
             {outside} selectors outside, {probe_disagreements} probe failures, {elapsed:.2?}"
        ),
    )
}

fn coverage() -> Outcome {
    let k = 99;
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, seed) in [(1, 404), (10, 405)] {
        let c = coverage_experiment(k, m, 100_000, seed).unwrap();
        let limit = c.bound + 3.0 * c.standard_error();
        pass &= c.rate() <= limit;
        parts.push(format!("m={m}: {:.4} <= {:.4}", c.rate(), limit));
    }
    outcome(pass, format!("k=99, 1e5 draws; {}", parts.join(", ")))
}

fn merge_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let y_low = rng.random_range(-100.0..100.0);
        let y_high = y_low + rng.random_range(1e-3..200.0);
        let mut a = rng.random_range(y_low..=y_high);
        let mut b = rng.random_range(y_low..=y_high);
        if a > b {
            std::mem::swap(&mut a, &mut b);
        }
        let input = MergeInput::new(y_low, y_high, a, b);
        let y = merge_exact(&input).unwrap();
        let lhs = (y - y_low).powi(2) - (a - y_low).powi(2);
        let rhs = (y_high - y).powi(2) - (y_high - b).powi(2);
        let scale = (y_high - y_low).powi(2).max(1.0);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    let gaps: Vec<f64> = [1.0, 0.1, 0.01]
        .iter()
        .map(|w| {
            let input = MergeInput::new(0.0, 10.0, 3.0, 3.0 + w);
            (merge_approx(&input).unwrap().value - merge_exact(&input).unwrap()).abs()
        })
        .collect();
    let shrinking = gaps[0] > gaps[1] && gaps[1] > gaps[2];
    outcome(
        worst <= 1e-9 && shrinking,
        format!("1e4 inputs, max relative imbalance {worst:.2e}; approx-exact gaps {:.2e} > {:.2e} > {:.2e}", gaps[0], gaps[1], gaps[2]),
    )
}

fn bench_cell(scenario: Scenario) -> (f64, f64) {
    let mut cfg = BenchConfig::new(
        vec![DatasetSpec::new(scenario, 10_000, 3.0, 0)],
        vec![BaseRegressor::Ols],
        vec![Method::None, Method::Cvar { m: 1 }],
    );
    cfg.trials = 20;
    let report = run_bench(&cfg).unwrap();
    (report.cells[0].mean_rmse, report.cells[1].mean_rmse)
}

fn linear_gaussian_row() -> Outcome {
    let (none, cvar) = bench_cell(Scenario::LinearGaussian);
    let diff = cvar - none;
    outcome(
        (2.95..=3.05).contains(&none) && (-0.01..=0.06).contains(&diff),
        format!("none {none:.3}, CVAR1 {cvar:.3}, difference {diff:+.3}"),
    )
}

fn bounded_logistic_row() -> Outcome {
    let (none, cvar) = bench_cell(Scenario::BoundedLogistic);
    outcome(
        none - cvar >= 0.15 && (2.95..=3.10).contains(&cvar),
        format!(
            "none {none:.3}, CVAR1 {cvar:.3}, improvement {:.3}",
            none - cvar
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// Median over 5 runs of (preprocessing seconds, seconds per query).
fn timing(k: usize, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let scores: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
    let labels: Vec<f64> = scores
        .iter()
        .map(|s| s + rng.random_range(-1.0..1.0))
        .collect();
    let queries: Vec<f64> = (0..200_000).map(|_| rng.random_range(-3.5..3.5)).collect();
    let (mut pre, mut per_query) = (Vec::new(), Vec::new());
    for _ in 0..5 {
        let t = Instant::now();
        let cal = IntervalCalibrator::unbounded(black_box(&scores), black_box(&labels), 1).unwrap();
        pre.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let mut acc = 0.0;
        for &r in &queries {
            let iv = cal.interval(black_box(r)).unwrap();
            acc += iv.lower + iv.upper;
        }
        black_box(acc);
        per_query.push(t.elapsed().as_secs_f64() / queries.len() as f64);
    }
    (median(pre), median(per_query))
}

fn complexity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    timing(10_000, &mut rng); // warm-up
    let (pre_small, q_small) = timing(10_000, &mut rng);
    let (pre_large, q_large) = timing(40_000, &mut rng);
    let q_ratio = q_large / q_small;
    let pre_ratio = pre_large / pre_small;
    let pre_limit = 4f64.powf(1.3);
    outcome(
        q_ratio < 2.0 && pre_ratio < pre_limit,
        format!(
            "query ratio {q_ratio:.2} (< 2), preprocessing ratio {pre_ratio:.2} (< {pre_limit:.2}); \
             k=10000: {:.1} ms + {:.0} ns/query, k=40000: {:.1} ms + {:.0} ns/query",
            pre_small * 1e3,
            q_small * 1e9,
            pre_large * 1e3,
            q_large * 1e9
        ),
    )
}

fn label_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut violations = 0;
    for _ in 0..10_000 {
        let k = rng.random_range(1..=40);
        let scores = random_values(&mut rng, k, 0.5, 1.0);
        let low = random_values(&mut rng, k, 0.5, 5.0);
        let high: Vec<f64> = low
            .iter()
            .map(|y| {
                if rng.random_bool(0.3) {
                    *y
                } else {
                    y + rng.random_range(0.0..4.0)
                }
            })
            .collect();
        let f = pava_fit(&scored(&scores, &low)).unwrap().fitted_values();
        let g = pava_fit(&scored(&scores, &high)).unwrap().fitted_values();
        violations += f.iter().zip(&g).filter(|(a, b)| **a > **b + 1e-9).count();
    }
    outcome(
        violations == 0,
        format!("1e4 pairs, {violations} violations"),
    )
}

fn main() -> ExitCode {
    let mut ledger = OrderingLedger::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let o = f();
        println!(
            "criterion {:>2} {:<28} {}  {}",
            results.len() + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((name, o));
    };
    run("oracle equivalence", &mut || {
        oracle_equivalence(&mut ledger)
    });
    run("unbounded IVAR equivalence", &mut || {
        unbounded_equivalence(&mut ledger)
    });
    run("auto-calibration probe", &mut || {
        auto_calibration(&mut ledger)
    });
    run("coverage", &mut coverage);
    run("merge correctness", &mut merge_correctness);
    let (checked, violations) = (ledger.checked, ledger.violations);
    run("interval ordering", &mut || {
        outcome(
            violations == 0,
            format!("{checked} intervals, {violations} violations"),
        )
    });
    run("linear-gaussian OLS row", &mut linear_gaussian_row);
    run("bounded-logistic OLS row", &mut bounded_logistic_row);
    run("complexity", &mut complexity);
    run("label monotonicity", &mut label_monotonicity);

    let failed: Vec<&str> = results
        .iter()
        .filter(|(_, o)| !o.pass)
        .map(|(n, _)| *n)
        .collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        ExitCode::FAILURE
    }
}
