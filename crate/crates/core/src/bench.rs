//! Repeated-trial RMSE benchmark.
//!
//! Trial `t` uses the seed `base_seed + t`. From it two sub-seeds are
//! derived, one for the dataset (objects, noise and the 80/20 split) and one
//! for CVAR fold assignment, so every cell of a report is reproducible on its
//! own. Features are standardized with training statistics; labels are left
//! as generated.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::baselines::{apply_standardizer, fit_standardizer, BaseRegressor, Regressor};
use crate::cvar::{fit_cvar, CvarConfig, DEFAULT_FOLDS};
use crate::datagen::{generate, Dataset, DatasetSpec};
use crate::merge::MergeMode;
use crate::vennabers::CalibrationMode;
use crate::{Error, Result};

/// Trials per cell unless configured otherwise.
pub const DEFAULT_TRIALS: usize = 20;

const DATASET_TAG: u64 = 0;
const FOLD_TAG: u64 = 1;

/// Independent sub-seed number `tag` of `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag);
    rng.next_u64()
}

/// Root mean squared error.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() || predictions.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            predictions.len(),
            truths.len()
        )));
    }
    let sse: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// The base regressor as is.
    None,
    /// CVAR with Winsorization parameter `m`.
    Cvar { m: usize },
}

impl Method {
    /// Column heading in markdown tables.
    pub fn heading(&self) -> String {
        match self {
            Self::None => "none".into(),
            Self::Cvar { m } => format!("CVAR{m}"),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::None => f.write_str("none"),
            Self::Cvar { m } => write!(f, "cvar-m{m}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts `none`, `cvar-m<m>` and `cvar<m>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "none" {
            return Ok(Self::None);
        }
        let m = s
            .strip_prefix("cvar-m")
            .or_else(|| s.strip_prefix("cvar"))
            .and_then(|rest| rest.parse::<usize>().ok())
            .filter(|&m| m >= 1);
        m.map(|m| Self::Cvar { m }).ok_or_else(|| {
            Error::InvalidParameter(format!("unknown method `{s}` (expected none or cvar-m<m>)"))
        })
    }
}

/// Row label of a dataset spec, e.g. `linear-gaussian/n=10000/sigma=3`.
pub fn dataset_label(spec: &DatasetSpec) -> String {
    format!("{}/n={}/sigma={}", spec.scenario, spec.n, spec.sigma).replace(',', ";")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Dataset specs; their `seed` field is replaced by the trial seed.
    pub datasets: Vec<DatasetSpec>,
    pub bases: Vec<BaseRegressor>,
    pub methods: Vec<Method>,
    pub folds: usize,
    pub merge: MergeMode,
    pub trials: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl BenchConfig {
    pub fn new(
        datasets: Vec<DatasetSpec>,
        bases: Vec<BaseRegressor>,
        methods: Vec<Method>,
    ) -> Self {
        Self {
            datasets,
            bases,
            methods,
            folds: DEFAULT_FOLDS,
            merge: MergeMode::Approx,
            trials: DEFAULT_TRIALS,
            base_seed: 0,
            jobs: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if self.datasets.is_empty() || self.bases.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one dataset, base regressor and method".into(),
            ));
        }
        Ok(())
    }
}

/// Test RMSE of each `(base, method)` pair on one dataset, base-major.
pub fn evaluate_dataset(
    data: &Dataset,
    bases: &[BaseRegressor],
    methods: &[Method],
    folds: usize,
    merge: MergeMode,
    fold_seed: u64,
) -> Result<Vec<f64>> {
    let scaler = fit_standardizer(&data.train_rows)?;
    let train = apply_standardizer(&scaler, &data.train_rows);
    let test = apply_standardizer(&scaler, &data.test_rows);
    let mut out = Vec::with_capacity(bases.len() * methods.len());
    for base in bases {
        for method in methods {
            let predictions = match *method {
                Method::None => {
                    let rule = base.fit(&train, &data.train_labels)?;
                    test.iter().map(|x| rule.predict(x)).collect()
                }
                Method::Cvar { m } => {
                    let cfg = CvarConfig {
                        folds,
                        mode: CalibrationMode::Unbounded { m },
                        merge,
                        fold_seed,
                    };
                    fit_cvar(&train, &data.train_labels, base, &cfg)?.predict_many(&test)?
                }
            };
            out.push(rmse(&predictions, &data.test_labels)?);
        }
    }
    Ok(out)
}

fn trial_rmses(
    spec: &DatasetSpec,
    bases: &[BaseRegressor],
    methods: &[Method],
    folds: usize,
    merge: MergeMode,
    seed: u64,
) -> Result<Vec<f64>> {
    let spec = DatasetSpec {
        seed: derive_seed(seed, DATASET_TAG),
        ..spec.clone()
    };
    let data = generate(&spec)?;
    evaluate_dataset(
        &data,
        bases,
        methods,
        folds,
        merge,
        derive_seed(seed, FOLD_TAG),
    )
}

/// Test RMSE of one method in one trial.
pub fn run_trial(
    spec: &DatasetSpec,
    base: BaseRegressor,
    method: Method,
    folds: usize,
    merge: MergeMode,
    seed: u64,
) -> Result<f64> {
    trial_rmses(spec, &[base], &[method], folds, merge, seed)
        .map(|v| v[0])
        .map_err(|e| Error::Trial {
            seed,
            source: Box::new(e),
        })
}

/// Aggregate over trials of one (dataset, base, method) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchCell {
    pub dataset: String,
    pub base: String,
    pub method: Method,
    pub mean_rmse: f64,
    /// Sample standard deviation over `sqrt(trials)`; zero for one trial.
    pub sem: f64,
    pub trials: usize,
    pub rmses: Vec<f64>,
}

fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl BenchCell {
    pub fn from_rmses(dataset: String, base: String, method: Method, rmses: Vec<f64>) -> Self {
        let (mean_rmse, sem) = mean_and_sem(&rmses);
        Self {
            dataset,
            base,
            method,
            mean_rmse,
            sem,
            trials: rmses.len(),
            rmses,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    /// Ordered by dataset, then base, then method, as configured.
    pub cells: Vec<BenchCell>,
    pub trials: usize,
    pub folds: usize,
    pub merge: MergeMode,
    pub base_seed: u64,
}

impl BenchReport {
    pub fn cell(&self, dataset: &str, base: &str, method: Method) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.base == base && c.method == method)
    }

    fn datasets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.dataset.as_str()) {
                out.push(&c.dataset);
            }
        }
        out
    }

    /// Mean of the per-base mean RMSEs of each method on one dataset.
    pub fn column_averages(&self, dataset: &str) -> Vec<(Method, f64)> {
        let mut out: Vec<(Method, Vec<f64>)> = Vec::new();
        for c in self.cells.iter().filter(|c| c.dataset == dataset) {
            match out.iter_mut().find(|(m, _)| *m == c.method) {
                Some((_, v)) => v.push(c.mean_rmse),
                None => out.push((c.method, vec![c.mean_rmse])),
            }
        }
        out.into_iter()
            .map(|(m, v)| (m, v.iter().sum::<f64>() / v.len() as f64))
            .collect()
    }
}

/// Runs every trial, in parallel on `cfg.jobs` threads. The report does not
/// depend on the thread count.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let jobs: Vec<(usize, u64)> = (0..cfg.datasets.len())
        .flat_map(|d| (0..cfg.trials as u64).map(move |t| (d, cfg.base_seed.wrapping_add(t))))
        .collect();
    let results: Vec<Result<Vec<f64>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(d, seed)| {
                trial_rmses(
                    &cfg.datasets[d],
                    &cfg.bases,
                    &cfg.methods,
                    cfg.folds,
                    cfg.merge,
                    seed,
                )
                .map_err(|e| Error::Trial {
                    seed,
                    source: Box::new(e),
                })
            })
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let per_trial = cfg.bases.len() * cfg.methods.len();
    let mut cells = Vec::new();
    for (d, spec) in cfg.datasets.iter().enumerate() {
        let trials = &results[d * cfg.trials..(d + 1) * cfg.trials];
        for (b, base) in cfg.bases.iter().enumerate() {
            for (mi, method) in cfg.methods.iter().enumerate() {
                let idx = b * cfg.methods.len() + mi;
                debug_assert!(idx < per_trial);
                let rmses = trials.iter().map(|r| r[idx]).collect();
                cells.push(BenchCell::from_rmses(
                    dataset_label(spec),
                    base.short_name().to_string(),
                    *method,
                    rmses,
                ));
            }
        }
    }
    Ok(BenchReport {
        cells,
        trials: cfg.trials,
        folds: cfg.folds,
        merge: cfg.merge,
        base_seed: cfg.base_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            other => Err(Error::InvalidParameter(format!(
                "unknown format `{other}` (expected csv or md)"
            ))),
        }
    }
}

pub const CSV_HEADER: &str = "dataset,base,method,mean_rmse,sem,trials";

pub fn render_report(report: &BenchReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn render_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{:.3},{:.3},{}\n",
            c.dataset, c.base, c.method, c.mean_rmse, c.sem, c.trials
        ));
    }
    out
}

/// Bolds the entries whose rendered value equals the rendered minimum.
fn emphasize_min(values: &[f64]) -> Vec<bool> {
    let rendered: Vec<f64> = values
        .iter()
        .map(|v| format!("{v:.3}").parse().unwrap_or(*v))
        .collect();
    let min = rendered.iter().copied().fold(f64::INFINITY, f64::min);
    rendered.iter().map(|v| *v == min).collect()
}

fn render_markdown(report: &BenchReport) -> String {
    let mut out = String::new();
    for dataset in report.datasets() {
        let cells: Vec<&BenchCell> = report
            .cells
            .iter()
            .filter(|c| c.dataset == dataset)
            .collect();
        let mut methods: Vec<Method> = Vec::new();
        let mut bases: Vec<&str> = Vec::new();
        for c in &cells {
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
            if !bases.contains(&c.base.as_str()) {
                bases.push(&c.base);
            }
        }
        out.push_str(&format!("### {dataset}\n\n|"));
        for m in &methods {
            out.push_str(&format!(" | {}", m.heading()));
        }
        out.push_str(" |\n|---");
        out.push_str(&"|---:".repeat(methods.len()));
        out.push_str("|\n");
        for base in &bases {
            let row: Vec<Option<&&BenchCell>> = methods
                .iter()
                .map(|m| cells.iter().find(|c| c.base == *base && c.method == *m))
                .collect();
            let means: Vec<f64> = row
                .iter()
                .map(|c| c.map_or(f64::INFINITY, |c| c.mean_rmse))
                .collect();
            let bold = emphasize_min(&means);
            out.push_str(&format!("| {base}"));
            for (c, b) in row.iter().zip(bold) {
                match c {
                    Some(c) if b => {
                        out.push_str(&format!(" | **{:.3}** ± {:.3}", c.mean_rmse, c.sem))
                    }
                    Some(c) => out.push_str(&format!(" | {:.3} ± {:.3}", c.mean_rmse, c.sem)),
                    None => out.push_str(" | "),
                }
            }
            out.push_str(" |\n");
        }
        let averages: Vec<f64> = report
            .column_averages(dataset)
            .iter()
            .map(|(_, a)| *a)
            .collect();
        out.push_str("| average");
        for (a, b) in averages.iter().zip(emphasize_min(&averages)) {
            if b {
                out.push_str(&format!(" | **{a:.3}**"));
            } else {
                out.push_str(&format!(" | {a:.3}"));
            }
        }
        out.push_str(" |\n\n");
    }
    out.push_str(&format!(
        "Mean test RMSE ± SEM over {} trials (seeds {} to {}); CVAR with {} folds, {} merge.\n",
        report.trials,
        report.base_seed,
        report
            .base_seed
            .wrapping_add(report.trials.saturating_sub(1) as u64),
        report.folds,
        report.merge.as_str()
    ));
    out
}

/// One parsed line of a CSV report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub base: String,
    pub method: Method,
    pub mean_rmse: f64,
    pub sem: f64,
    pub trials: usize,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "unexpected report header `{}`",
            header.join(",")
        )));
    }
    let number = |row: usize, column: &str, cell: &str| {
        cell.parse::<f64>().map_err(|_| Error::NonNumeric {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        })
    };
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let row = i + 1;
            Ok(ReportRow {
                dataset: rec[0].to_string(),
                base: rec[1].to_string(),
                method: rec[2].parse()?,
                mean_rmse: number(row, "mean_rmse", &rec[3])?,
                sem: number(row, "sem", &rec[4])?,
                trials: number(row, "trials", &rec[5])? as usize,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Scenario;

    fn small_config(trials: usize) -> BenchConfig {
        let mut cfg = BenchConfig::new(
            vec![DatasetSpec::new(Scenario::LinearGaussian, 300, 1.0, 0)],
            vec![BaseRegressor::Ols, BaseRegressor::knn()],
            vec![Method::None, Method::Cvar { m: 1 }],
        );
        cfg.trials = trials;
        cfg.base_seed = 11;
        cfg
    }

    #[test]
    fn rmse_definition() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2f64.sqrt());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn method_names() {
        for m in [Method::None, Method::Cvar { m: 1 }, Method::Cvar { m: 10 }] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert_eq!("CVAR10".parse::<Method>().unwrap(), Method::Cvar { m: 10 });
        assert!("cvar-m0".parse::<Method>().is_err());
    }

    #[test]
    fn trial_is_deterministic() {
        let spec = DatasetSpec::new(Scenario::Nonlinear, 200, 1.0, 0);
        let a = run_trial(
            &spec,
            BaseRegressor::Ols,
            Method::None,
            10,
            MergeMode::Approx,
            5,
        )
        .unwrap();
        let b = run_trial(
            &spec,
            BaseRegressor::Ols,
            Method::None,
            10,
            MergeMode::Approx,
            5,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    fn noiseless_relative_rmse(n: usize, seed: u64) -> f64 {
        let spec = DatasetSpec::new(Scenario::LinearGaussian, n, 0.0, 0);
        let r = run_trial(
            &spec,
            BaseRegressor::Ols,
            Method::Cvar { m: 1 },
            10,
            MergeMode::Approx,
            seed,
        )
        .unwrap();
        let data = generate(&DatasetSpec {
            seed: derive_seed(seed, DATASET_TAG),
            ..spec
        })
        .unwrap();
        let (mean, _) = mean_and_sem(&data.test_labels);
        let sd = (data
            .test_labels
            .iter()
            .map(|y| (y - mean).powi(2))
            .sum::<f64>()
            / data.test_labels.len() as f64)
            .sqrt();
        r / sd
    }

    // Interval width shrinks like the square root of the score spacing, so
    // the check is relative to the label scale and to growing n.
    #[test]
    fn cvar_nearly_interpolates_noiseless_linear() {
        for seed in 0..3 {
            let small = noiseless_relative_rmse(10_000, seed);
            let large = noiseless_relative_rmse(40_000, seed);
            assert!(large < 0.1, "seed {seed}: {large}");
            assert!(large < 0.75 * small, "seed {seed}: {small} -> {large}");
        }
    }

    #[test]
    fn single_trial_has_zero_sem() {
        let report = run_bench(&small_config(1)).unwrap();
        assert!(report.cells.iter().all(|c| c.sem == 0.0 && c.trials == 1));
    }

    #[test]
    fn sem_formula() {
        let c = BenchCell::from_rmses(
            "d".into(),
            "b".into(),
            Method::None,
            vec![1.0, 2.0, 3.0, 4.0],
        );
        assert_eq!(c.mean_rmse, 2.5);
        assert!((c.sem - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut seq = small_config(3);
        seq.jobs = 1;
        let mut par = small_config(3);
        par.jobs = 4;
        let a = run_bench(&seq).unwrap();
        assert_eq!(a, run_bench(&par).unwrap());
        assert_eq!(
            render_report(&a, ReportFormat::Markdown),
            render_report(&run_bench(&seq).unwrap(), ReportFormat::Markdown)
        );
    }

    #[test]
    fn disjoint_seed_ranges_differ() {
        let a = run_bench(&small_config(2)).unwrap();
        let mut other = small_config(2);
        other.base_seed = 1000;
        let b = run_bench(&other).unwrap();
        assert_ne!(a.cells[0].mean_rmse, b.cells[0].mean_rmse);
    }

    #[test]
    fn failing_trial_names_seed() {
        let mut cfg = small_config(2);
        cfg.datasets[0].n = 20;
        cfg.methods = vec![Method::Cvar { m: 1 }];
        let err = run_bench(&cfg).unwrap_err();
        assert!(matches!(err, Error::Trial { seed: 11, .. }), "{err}");
        assert!(err.to_string().contains("seed 11"));
    }

    fn one_cell_report() -> BenchReport {
        BenchReport {
            cells: vec![BenchCell::from_rmses(
                "linear-gaussian/n=10/sigma=3".into(),
                "ols".into(),
                Method::Cvar { m: 1 },
                vec![3.0021, 3.0049],
            )],
            trials: 2,
            folds: 10,
            merge: MergeMode::Approx,
            base_seed: 0,
        }
    }

    #[test]
    fn csv_one_cell() {
        let text = render_report(&one_cell_report(), ReportFormat::Csv);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines,
            vec![
                CSV_HEADER,
                "linear-gaussian/n=10/sigma=3,ols,cvar-m1,3.003,0.001,2"
            ]
        );
    }

    #[test]
    fn csv_parse_back() {
        let report = run_bench(&small_config(2)).unwrap();
        let rows = parse_report_csv(&render_report(&report, ReportFormat::Csv)).unwrap();
        assert_eq!(rows.len(), report.cells.len());
        for (r, c) in rows.iter().zip(&report.cells) {
            assert_eq!(
                (&r.dataset, &r.base, r.method, r.trials),
                (&c.dataset, &c.base, c.method, c.trials)
            );
            assert!((r.mean_rmse - c.mean_rmse).abs() <= 5e-4 + 1e-12);
            assert!((r.sem - c.sem).abs() <= 5e-4 + 1e-12);
        }
    }

    #[test]
    fn markdown_layout() {
        let mut report = one_cell_report();
        report.cells.push(BenchCell::from_rmses(
            report.cells[0].dataset.clone(),
            "ols".into(),
            Method::None,
            vec![3.5, 3.5],
        ));
        let md = render_report(&report, ReportFormat::Markdown);
        assert!(md.contains("| | CVAR1 | none |"), "{md}");
        assert!(
            md.contains("| ols | **3.003** ± 0.001 | 3.500 ± 0.000 |"),
            "{md}"
        );
        assert!(md.contains("| average | **3.003** | 3.500 |"), "{md}");
        assert!(md.contains("2 trials"));
    }
}
