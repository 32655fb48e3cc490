//! `ivar`: generate datasets, calibrate regressors, run benchmarks and probe
//! validity from the command line.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use ivar_core::baselines::{
    apply_standardizer, fit_standardizer, BaseRegressor, Regressor, DEFAULT_NEIGHBORS,
    DEFAULT_RIDGE_LAMBDA,
};
use ivar_core::bench::{
    render_report, run_bench, BenchConfig, Method, ReportFormat, DEFAULT_TRIALS,
};
use ivar_core::cvar::{fit_cvar, CvarConfig, DEFAULT_FOLDS};
use ivar_core::datagen::{
    generate, read_csv_table, write_csv, write_csv_to, DatasetSpec, Scenario,
};
use ivar_core::merge::{MergeInput, MergeMode};
use ivar_core::probe::{coverage_experiment, run_probe_suite};
use ivar_core::vennabers::{epsilon_to_m, fit_bounded, fit_unbounded, CalibrationMode, IvarConfig};

#[derive(Parser)]
#[command(name = "ivar", version, about = "Venn-Abers regression toolkit")]
struct Cli {
    /// Flat TOML file with default values; command-line flags take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and write it as CSV.
    Generate(GenerateArgs),
    /// Fit an IVAR or CVAR on a training CSV and predict a test CSV.
    Calibrate(CalibrateArgs),
    /// Run the repeated-trial RMSE benchmark.
    Bench(BenchArgs),
    /// Run the randomized auto-calibration and coverage checks.
    Probe(ProbeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Number of features (Friedman 2 and 3 always have 4).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; all rows, training part first. Defaults to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Write the test part here and only the training part to `--out`.
    #[arg(long, value_name = "PATH")]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct BaseArgs {
    #[arg(long, value_delimiter = ',', value_name = "ols|ridge|knn")]
    base: Vec<String>,
    /// Ridge penalty.
    #[arg(long)]
    lambda: Option<f64>,
    /// Neighbour count for k-NN.
    #[arg(long)]
    neighbors: Option<usize>,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_name = "PATH")]
    train: PathBuf,
    #[arg(long, value_name = "PATH")]
    test: PathBuf,
    /// Name of the label column.
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    base: BaseArgs,
    /// `ivar` (one calibration split) or `cvar` (K folds).
    #[arg(long, value_name = "ivar|cvar")]
    method: Option<String>,
    /// Winsorization parameter.
    #[arg(long, conflicts_with = "epsilon")]
    m: Option<usize>,
    /// Target miscoverage; picks the largest m with 2m/(k+1) <= epsilon.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Known label bounds `LO,HI`; switches to bounded calibration.
    #[arg(long, value_name = "LO,HI", allow_hyphen_values = true)]
    bounds: Option<String>,
    /// Calibration set size for `ivar` (default: a fifth of the training set).
    #[arg(long)]
    calibration_size: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_name = "exact|approx")]
    merge: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "csv|md")]
    format: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    scenario: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    sigma: Vec<f64>,
    /// Seed of the first trial; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    base: BaseArgs,
    /// Methods, e.g. `none,cvar` or `none,cvar-m1,cvar-m10`.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Winsorization parameter used by a bare `cvar`.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, value_name = "exact|approx")]
    merge: Option<String>,
    #[arg(long, value_name = "csv|md")]
    format: Option<String>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Number of random bags for the auto-calibration check.
    #[arg(long)]
    bags: Option<usize>,
    /// Largest calibration size in a bag.
    #[arg(long)]
    max_k: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    /// Calibration size for the coverage experiment.
    #[arg(long)]
    k: Option<usize>,
    /// Monte Carlo draws for the coverage experiment.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum BoundsValue {
    Text(String),
    Pair([f64; 2]),
}

/// Keys accepted in the `--config` file.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct FileConfig {
    scenario: Option<OneOrMany<String>>,
    n: Option<OneOrMany<usize>>,
    sigma: Option<OneOrMany<f64>>,
    d: Option<usize>,
    seed: Option<u64>,
    trials: Option<usize>,
    base: Option<OneOrMany<String>>,
    lambda: Option<f64>,
    neighbors: Option<usize>,
    method: Option<OneOrMany<String>>,
    m: Option<usize>,
    epsilon: Option<f64>,
    bounds: Option<BoundsValue>,
    calibration_size: Option<usize>,
    folds: Option<usize>,
    merge: Option<String>,
    format: Option<String>,
    out: Option<PathBuf>,
    jobs: Option<usize>,
    label: Option<String>,
    bags: Option<usize>,
    max_k: Option<usize>,
    k: Option<usize>,
    draws: Option<usize>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Command-line list if given, else the file's, else the default.
fn list_or<T: Clone>(cli: Vec<T>, file: &Option<OneOrMany<T>>, default: Vec<T>) -> Vec<T> {
    if !cli.is_empty() {
        cli
    } else {
        file.as_ref().map_or(default, OneOrMany::to_vec)
    }
}

fn parse<T: FromStr>(text: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    Ok(text.parse::<T>()?)
}

fn parse_bounds(text: &str) -> Result<(f64, f64)> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("bounds must look like LO,HI, got `{text}`"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn bounds_from(cli: Option<&str>, file: &Option<BoundsValue>) -> Result<Option<(f64, f64)>> {
    match (cli, file) {
        (Some(text), _) => parse_bounds(text).map(Some),
        (None, Some(BoundsValue::Text(text))) => parse_bounds(text).map(Some),
        (None, Some(BoundsValue::Pair([lo, hi]))) => Ok(Some((*lo, *hi))),
        (None, None) => Ok(None),
    }
}

fn base_regressors(
    args: &BaseArgs,
    file: &FileConfig,
    default: &str,
) -> Result<Vec<BaseRegressor>> {
    let lambda = args.lambda.or(file.lambda).unwrap_or(DEFAULT_RIDGE_LAMBDA);
    let neighbors = args
        .neighbors
        .or(file.neighbors)
        .unwrap_or(DEFAULT_NEIGHBORS);
    list_or(args.base.clone(), &file.base, vec![default.to_string()])
        .iter()
        .map(|name| Ok(BaseRegressor::parse(name, lambda, neighbors)?))
        .collect()
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn cmd_generate(args: GenerateArgs, file: &FileConfig) -> Result<()> {
    let scenario_name = args
        .scenario
        .or_else(|| {
            file.scenario
                .as_ref()
                .and_then(|s| s.to_vec().into_iter().next())
        })
        .ok_or_else(|| anyhow!("--scenario is required"))?;
    let first = |v: &Option<OneOrMany<usize>>| v.as_ref().and_then(|v| v.to_vec().first().copied());
    let mut spec = DatasetSpec::new(
        parse(&scenario_name)?,
        args.n.or(first(&file.n)).unwrap_or(1000),
        args.sigma
            .or(file
                .sigma
                .as_ref()
                .and_then(|v| v.to_vec().first().copied()))
            .unwrap_or(1.0),
        args.seed.or(file.seed).unwrap_or(0),
    );
    if let Some(d) = args.d.or(file.d) {
        spec.d = d;
    }
    let data = generate(&spec)?;
    let out = args.out.or(file.out.clone());
    match (args.test_out, out) {
        (Some(test_out), Some(out)) => {
            write_csv(&out, &data.train_rows, &data.train_labels)?;
            write_csv(&test_out, &data.test_rows, &data.test_labels)?;
        }
        (Some(_), None) => bail!("--test-out needs --out for the training part"),
        (None, out) => {
            let rows: Vec<Vec<f64>> = data
                .train_rows
                .iter()
                .chain(&data.test_rows)
                .cloned()
                .collect();
            let labels: Vec<f64> = data
                .train_labels
                .iter()
                .chain(&data.test_labels)
                .copied()
                .collect();
            match out {
                Some(path) => write_csv(&path, &rows, &labels)?,
                None => write_csv_to(std::io::stdout().lock(), &rows, &labels)?,
            }
        }
    }
    Ok(())
}

type Rows = Vec<Vec<f64>>;

/// Rows of a CSV plus its labels when the label column is present.
fn read_rows(path: &Path, label: &str) -> Result<(Rows, Option<Vec<f64>>)> {
    let table = read_csv_table(path).with_context(|| format!("reading {}", path.display()))?;
    if table.header.iter().any(|h| h == label) {
        let (rows, labels) = table.into_features_and_labels(label)?;
        Ok((rows, Some(labels)))
    } else {
        Ok((table.rows, None))
    }
}

fn render_rows(header: &[&str], rows: &[Vec<String>], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
        }
        ReportFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str(&format!("|{}\n", "---:|".repeat(header.len())));
            for r in rows {
                out.push_str(&format!("| {} |\n", r.join(" | ")));
            }
        }
    }
    out
}

fn cmd_calibrate(args: CalibrateArgs, file: &FileConfig) -> Result<()> {
    let label = args
        .label
        .or(file.label.clone())
        .unwrap_or_else(|| "label".into());
    let (train_rows, train_labels) = read_rows(&args.train, &label)?;
    let train_labels =
        train_labels.ok_or_else(|| anyhow!("training file has no `{label}` column"))?;
    let (test_rows, test_labels) = read_rows(&args.test, &label)?;

    let scaler = fit_standardizer(&train_rows)?;
    let train_rows = apply_standardizer(&scaler, &train_rows);
    let test_rows = apply_standardizer(&scaler, &test_rows);

    let bases = base_regressors(&args.base, file, "ols")?;
    let [base] = bases[..] else {
        bail!("calibrate takes a single --base");
    };
    let method = args
        .method
        .or_else(|| {
            file.method
                .as_ref()
                .and_then(|m| m.to_vec().into_iter().next())
        })
        .unwrap_or_else(|| "ivar".into());
    let merge: MergeMode = parse(
        &args
            .merge
            .or(file.merge.clone())
            .unwrap_or_else(|| "approx".into()),
    )?;
    let format: ReportFormat = parse(
        &args
            .format
            .or(file.format.clone())
            .unwrap_or_else(|| "csv".into()),
    )?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let folds = args.folds.or(file.folds).unwrap_or(DEFAULT_FOLDS);
    let l = train_rows.len();
    let calibration_size = args
        .calibration_size
        .or(file.calibration_size)
        .unwrap_or(l / 5);
    // Size of the calibration set each IVAR sees, for turning epsilon into m.
    let k = match method.as_str() {
        "ivar" => calibration_size,
        "cvar" => l / folds.max(1),
        other => bail!("unknown calibrate method `{other}` (expected ivar or cvar)"),
    };
    let mode = match bounds_from(args.bounds.as_deref(), &file.bounds)? {
        Some((lower, upper)) => CalibrationMode::Bounded { lower, upper },
        None => {
            let m = match (args.m, args.epsilon) {
                (Some(m), _) => m,
                (None, Some(eps)) => epsilon_to_m(eps, k)?,
                (None, None) => match (file.m, file.epsilon) {
                    (Some(m), _) => m,
                    (None, Some(eps)) => epsilon_to_m(eps, k)?,
                    (None, None) => 1,
                },
            };
            CalibrationMode::Unbounded { m }
        }
    };

    let mut header = vec!["index"];
    let mut table = Vec::with_capacity(test_rows.len());
    let mut points = Vec::with_capacity(test_rows.len());
    if method == "ivar" {
        let cfg = IvarConfig {
            calibration_size,
            mode,
            split_seed: seed,
        };
        let model = match mode {
            CalibrationMode::Unbounded { .. } => {
                fit_unbounded(&train_rows, &train_labels, &base, &cfg)?
            }
            CalibrationMode::Bounded { .. } => {
                fit_bounded(&train_rows, &train_labels, &base, &cfg)?
            }
        };
        header.extend(["lower", "upper", "point"]);
        let (y_low, y_high) = model.anchors();
        for (i, x) in test_rows.iter().enumerate() {
            let iv = model.predict_interval(x)?;
            let point = merge.merge(&MergeInput::new(y_low, y_high, iv.lower, iv.upper))?;
            points.push(point);
            table.push(vec![
                i.to_string(),
                iv.lower.to_string(),
                iv.upper.to_string(),
                point.to_string(),
            ]);
        }
    } else {
        let cfg = CvarConfig {
            folds,
            mode,
            merge,
            fold_seed: seed,
        };
        let model = fit_cvar(&train_rows, &train_labels, &base, &cfg)?;
        header.push("point");
        for (i, x) in test_rows.iter().enumerate() {
            let point = model.predict_point(x)?;
            points.push(point);
            table.push(vec![i.to_string(), point.to_string()]);
        }
    }
    if let Some(labels) = &test_labels {
        header.push("label");
        for (row, y) in table.iter_mut().zip(labels) {
            row.push(y.to_string());
        }
        let rmse = ivar_core::bench::rmse(&points, labels)?;
        eprintln!(
            "{} with {}: test RMSE {rmse:.3} on {} rows",
            method,
            base.name(),
            labels.len()
        );
    }
    emit(
        args.out.or(file.out.clone()).as_deref(),
        &render_rows(&header, &table, format),
    )
}

fn cmd_bench(args: BenchArgs, file: &FileConfig) -> Result<()> {
    let scenarios = list_or(
        args.scenario,
        &file.scenario,
        vec!["linear-gaussian".into()],
    );
    let ns = list_or(args.n, &file.n, vec![10_000]);
    let sigmas = list_or(args.sigma, &file.sigma, vec![3.0]);
    let d = file.d;
    let mut datasets = Vec::new();
    for s in &scenarios {
        let scenario: Scenario = parse(s)?;
        for &n in &ns {
            for &sigma in &sigmas {
                let mut spec = DatasetSpec::new(scenario.clone(), n, sigma, 0);
                if let Some(d) = d {
                    spec.d = d;
                }
                datasets.push(spec);
            }
        }
    }
    let m = args.m.or(file.m).unwrap_or(1);
    let methods = list_or(
        args.method,
        &file.method,
        vec!["none".into(), "cvar".into()],
    )
    .iter()
    .map(|name| match name.trim() {
        "cvar" => Ok(Method::Cvar { m }),
        other => Ok(parse::<Method>(other)?),
    })
    .collect::<Result<Vec<_>>>()?;
    let mut cfg = BenchConfig::new(datasets, base_regressors(&args.base, file, "ols")?, methods);
    cfg.trials = args.trials.or(file.trials).unwrap_or(DEFAULT_TRIALS);
    cfg.base_seed = args.seed.or(file.seed).unwrap_or(0);
    cfg.folds = args.folds.or(file.folds).unwrap_or(DEFAULT_FOLDS);
    cfg.merge = parse(
        &args
            .merge
            .or(file.merge.clone())
            .unwrap_or_else(|| "approx".into()),
    )?;
    cfg.jobs = args.jobs.or(file.jobs).unwrap_or(0);
    let format: ReportFormat = parse(
        &args
            .format
            .or(file.format.clone())
            .unwrap_or_else(|| "md".into()),
    )?;
    let report = run_bench(&cfg)?;
    emit(
        args.out.or(file.out.clone()).as_deref(),
        &render_report(&report, format),
    )
}

fn cmd_probe(args: ProbeArgs, file: &FileConfig) -> Result<()> {
    let bags = args.bags.or(file.bags).unwrap_or(200);
    let max_k = args.max_k.or(file.max_k).unwrap_or(8);
    let m = args.m.or(file.m).unwrap_or(1);
    let k = args.k.or(file.k).unwrap_or(99);
    let draws = args.draws.or(file.draws).unwrap_or(100_000);
    let seed = args.seed.or(file.seed).unwrap_or(0);

    let suite = run_probe_suite(bags, max_k, m, seed)?;
    let coverage = coverage_experiment(k, m, draws, seed)?;
    let limit = coverage.bound + 3.0 * coverage.standard_error();
    let text = format!(
        "auto-calibration: {} bags (k <= {max_k}, m = {m}), {} selector groups, \
         max |E(Y'|S) - S| = {:.3e}, interval ordering violations = {}\n\
         coverage: k = {k}, m = {m}, {draws} draws, P(Y != Y') = {:.4} (bound {:.4}, +3 SE {:.4}) {}\n",
        suite.bags,
        suite.groups,
        suite.max_calibration_gap,
        suite.ordering_violations,
        coverage.rate(),
        coverage.bound,
        limit,
        if coverage.rate() <= limit { "ok" } else { "EXCEEDED" }
    );
    emit(args.out.or(file.out.clone()).as_deref(), &text)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Generate(a) => cmd_generate(a, &file),
        Command::Calibrate(a) => cmd_calibrate(a, &file),
        Command::Bench(a) => cmd_bench(a, &file),
        Command::Probe(a) => cmd_probe(a, &file),
    }
}
