//! Seeded synthetic regression scenarios and CSV ingestion.
//!
//! All randomness comes from ChaCha8 seeded with the dataset seed. Stream 0
//! draws the true weights, then objects and noise example by example;
//! stream 1 draws the 80/20 train/test permutation. Gaussian draws use the
//! ziggurat sampler of `rand_distr`, so a spec reproduces the same dataset
//! bit for bit on every platform.
//!
//! Unless stated otherwise objects are `x ~ N(0, I_d)`, weights
//! `w ~ N(0, I_d)` and noise `ξ ~ N(0, σ²)`:
//!
//! | scenario          | label                                                   |
//! |-------------------|---------------------------------------------------------|
//! | `bounded-logistic`| `10 / (1 + exp(-wᵀx)) + ξ`                              |
//! | `linear-gaussian` | `wᵀx + ξ`                                               |
//! | `nonlinear`       | `wᵀx + 2 sin x₀ + x₁²/2 - cos 2x₂ + ξ`                  |
//! | `heteroscedastic` | `wᵀx + ξ`, `ξ ~ N(0, (σ/2 + abs(x₀))²)`                 |
//! | `heavy-tailed`    | `wᵀx + ξ`, `ξ ~ t_ν` with `ν = 3σ` (unscaled)           |
//! | `outlier`         | `wᵀx + ξ`, `ξ ~ N(0, (10σ)²)` with probability 0.01     |
//! | `sparse`          | `wᵀx + ξ`, `w` nonzero on 2 random coordinates          |
//! | `covariate-shift` | `wᵀx + ξ`, test objects from `N(1, I_d)`                |
//!
//! The Friedman problems follow the scikit-learn generators with `σ` as
//! their Gaussian noise level: Friedman 1 has `d ≥ 5` features uniform on
//! `[0, 1]` with `y = 10 sin(π x₀ x₁) + 20 (x₂ - 1/2)² + 10 x₃ + 5 x₄ + ξ`;
//! Friedman 2 and 3 have four features `x₀ ~ U[0, 100]`, `x₁ ~ U[40π, 560π]`,
//! `x₂ ~ U[0, 1]`, `x₃ ~ U[1, 11]` with `y = sqrt(x₀² + (x₁x₂ - 1/(x₁x₃))²) + ξ`
//! and `y = atan((x₁x₂ - 1/(x₁x₃)) / x₀) + ξ` respectively.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

use crate::{Error, Result};

/// Share of examples that go to the training part.
pub const TRAIN_FRACTION: f64 = 0.8;

const DATA_STREAM: u64 = 0;
const SPLIT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Scenario {
    BoundedLogistic,
    LinearGaussian,
    Nonlinear,
    Heteroscedastic,
    HeavyTailed,
    Outlier,
    Sparse,
    CovariateShift,
    Friedman1,
    Friedman2,
    Friedman3,
    /// An external CSV file with a `label` column.
    CsvFile(PathBuf),
}

impl Scenario {
    pub const SYNTHETIC: [Scenario; 11] = [
        Self::BoundedLogistic,
        Self::LinearGaussian,
        Self::Nonlinear,
        Self::Heteroscedastic,
        Self::HeavyTailed,
        Self::Outlier,
        Self::Sparse,
        Self::CovariateShift,
        Self::Friedman1,
        Self::Friedman2,
        Self::Friedman3,
    ];

    fn name(&self) -> &'static str {
        match self {
            Self::BoundedLogistic => "bounded-logistic",
            Self::LinearGaussian => "linear-gaussian",
            Self::Nonlinear => "nonlinear",
            Self::Heteroscedastic => "heteroscedastic",
            Self::HeavyTailed => "heavy-tailed",
            Self::Outlier => "outlier",
            Self::Sparse => "sparse",
            Self::CovariateShift => "covariate-shift",
            Self::Friedman1 => "friedman1",
            Self::Friedman2 => "friedman2",
            Self::Friedman3 => "friedman3",
            Self::CsvFile(_) => "csv",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CsvFile(path) => write!(f, "csv:{}", path.display()),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(path) = s.strip_prefix("csv:") {
            return Ok(Self::CsvFile(PathBuf::from(path)));
        }
        Self::SYNTHETIC
            .iter()
            .find(|sc| sc.name() == s)
            .cloned()
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

/// Scenario constants, all defaulting to the reference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioParams {
    /// Contamination probability of the outlier scenario.
    pub outlier_p: f64,
    /// Outlier noise scale as a multiple of `σ`.
    pub tau_mult: f64,
    /// Student-t degrees of freedom as a multiple of `σ`.
    pub nu_mult: f64,
    /// Number of nonzero weights in the sparse scenario.
    pub sparsity: usize,
    /// Per-coordinate mean of the shifted test objects.
    pub shift_mean: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            outlier_p: 0.01,
            tau_mult: 10.0,
            nu_mult: 3.0,
            sparsity: 2,
            shift_mean: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub seed: u64,
    pub params: ScenarioParams,
}

impl DatasetSpec {
    pub fn new(scenario: Scenario, n: usize, sigma: f64, seed: u64) -> Self {
        Self {
            scenario,
            n,
            d: 10,
            sigma,
            seed,
            params: ScenarioParams::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.d == 0 {
            return bad("d must be positive".into());
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            ));
        }
        let p = &self.params;
        if !(0.0..=1.0).contains(&p.outlier_p) {
            return bad(format!(
                "outlier probability {} outside [0, 1]",
                p.outlier_p
            ));
        }
        match self.scenario {
            Scenario::Sparse if p.sparsity > self.d => {
                bad(format!("sparsity {} exceeds d = {}", p.sparsity, self.d))
            }
            Scenario::HeavyTailed
                if p.nu_mult * self.sigma <= 0.0 || (p.nu_mult * self.sigma).is_nan() =>
            {
                bad(format!(
                    "heavy-tailed noise needs positive degrees of freedom, got {}",
                    p.nu_mult * self.sigma
                ))
            }
            Scenario::Friedman1 if self.d < 5 => bad("friedman1 needs d >= 5".into()),
            _ => Ok(()),
        }
    }
}

/// Generative details kept for inspection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationTrace {
    /// True weight vector (empty for Friedman and CSV data).
    pub weights: Vec<f64>,
    /// Per-example outlier flags in generation order (outlier scenario only).
    pub outliers: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub spec: DatasetSpec,
    pub train_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train_rows: Vec<Vec<f64>>,
    pub train_labels: Vec<f64>,
    pub test_rows: Vec<Vec<f64>>,
    pub test_labels: Vec<f64>,
    pub provenance: Provenance,
    pub trace: GenerationTrace,
}

impl Dataset {
    pub fn n_features(&self) -> usize {
        self.train_rows
            .first()
            .or(self.test_rows.first())
            .map_or(0, Vec::len)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian_vec(rng: &mut ChaCha8Rng, d: usize, mean: f64) -> Vec<f64> {
    (0..d).map(|_| mean + normal(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Training part size for `n` examples.
pub fn train_size(n: usize) -> usize {
    (n as f64 * TRAIN_FRACTION).floor() as usize
}

type Labelled = (Vec<Vec<f64>>, Vec<f64>);

fn split_by_permutation(rows: Vec<Vec<f64>>, labels: Vec<f64>, seed: u64) -> (Labelled, Labelled) {
    let n = rows.len();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut stream_rng(seed, SPLIT_STREAM));
    let n_train = train_size(n);
    let pick =
        |idx: &[usize]| -> Labelled { idx.iter().map(|&i| (rows[i].clone(), labels[i])).unzip() };
    let (train_rows, train_labels) = pick(&perm[..n_train]);
    let (test_rows, test_labels) = pick(&perm[n_train..]);
    ((train_rows, train_labels), (test_rows, test_labels))
}

/// Draws the dataset described by `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    if let Scenario::CsvFile(path) = &spec.scenario {
        let mut data = load_csv(path, "label", spec.seed)?;
        data.provenance.spec = spec.clone();
        return Ok(data);
    }
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, DATA_STREAM);
    let (n, d, sigma) = (spec.n, spec.d, spec.sigma);
    let p = spec.params;
    let mut trace = GenerationTrace::default();

    let friedman = matches!(
        spec.scenario,
        Scenario::Friedman1 | Scenario::Friedman2 | Scenario::Friedman3
    );
    if !friedman {
        trace.weights = match spec.scenario {
            Scenario::Sparse => {
                let support = rand::seq::index::sample(&mut rng, d, p.sparsity).into_vec();
                let mut w = vec![0.0; d];
                for j in support {
                    w[j] = normal(&mut rng);
                }
                w
            }
            _ => gaussian_vec(&mut rng, d, 0.0),
        };
    }
    let w = &trace.weights;
    let student = match spec.scenario {
        Scenario::HeavyTailed => Some(
            StudentT::new(p.nu_mult * sigma)
                .map_err(|e| Error::InvalidParameter(format!("student-t: {e}")))?,
        ),
        _ => None,
    };
    let n_train = train_size(n);

    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (x, y) = match spec.scenario {
            Scenario::Friedman1 => {
                let x: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let y = 10.0 * (PI * x[0] * x[1]).sin()
                    + 20.0 * (x[2] - 0.5).powi(2)
                    + 10.0 * x[3]
                    + 5.0 * x[4]
                    + sigma * normal(&mut rng);
                (x, y)
            }
            Scenario::Friedman2 | Scenario::Friedman3 => {
                let x = vec![
                    rng.random_range(0.0..100.0),
                    rng.random_range(40.0 * PI..560.0 * PI),
                    rng.random::<f64>(),
                    rng.random_range(1.0..11.0),
                ];
                let inner = x[1] * x[2] - 1.0 / (x[1] * x[3]);
                let y = if spec.scenario == Scenario::Friedman2 {
                    (x[0] * x[0] + inner * inner).sqrt()
                } else {
                    (inner / x[0]).atan()
                };
                (x, y + sigma * normal(&mut rng))
            }
            Scenario::CovariateShift => {
                let mean = if i < n_train { 0.0 } else { p.shift_mean };
                let x = gaussian_vec(&mut rng, d, mean);
                let y = dot(w, &x) + sigma * normal(&mut rng);
                (x, y)
            }
            _ => {
                let x = gaussian_vec(&mut rng, d, 0.0);
                let lin = dot(w, &x);
                let y = match spec.scenario {
                    Scenario::BoundedLogistic => {
                        10.0 / (1.0 + (-lin).exp()) + sigma * normal(&mut rng)
                    }
                    Scenario::Nonlinear => {
                        lin + 2.0 * x[0].sin() + 0.5 * x[1] * x[1] - (2.0 * x[2]).cos()
                            + sigma * normal(&mut rng)
                    }
                    Scenario::Heteroscedastic => {
                        lin + (0.5 * sigma + x[0].abs()) * normal(&mut rng)
                    }
                    Scenario::HeavyTailed => lin + student.as_ref().unwrap().sample(&mut rng),
                    Scenario::Outlier => {
                        let outlier = rng.random_bool(p.outlier_p);
                        trace.outliers.push(outlier);
                        let scale = if outlier { p.tau_mult * sigma } else { sigma };
                        lin + scale * normal(&mut rng)
                    }
                    _ => lin + sigma * normal(&mut rng),
                };
                (x, y)
            }
        };
        rows.push(x);
        labels.push(y);
    }

    let ((train_rows, train_labels), (test_rows, test_labels)) =
        if spec.scenario == Scenario::CovariateShift {
            let test_rows = rows.split_off(n_train);
            let test_labels = labels.split_off(n_train);
            ((rows, labels), (test_rows, test_labels))
        } else {
            split_by_permutation(rows, labels, spec.seed)
        };
    Ok(Dataset {
        train_rows,
        train_labels,
        test_rows,
        test_labels,
        provenance: Provenance {
            spec: spec.clone(),
            train_fraction: TRAIN_FRACTION,
        },
        trace,
    })
}

/// A parsed numeric CSV: header plus rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    /// Splits the named column off as labels.
    pub fn into_features_and_labels(self, label_column: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        let li = self
            .header
            .iter()
            .position(|h| h == label_column)
            .ok_or_else(|| Error::MissingColumn(label_column.to_string()))?;
        Ok(self
            .rows
            .into_iter()
            .map(|mut row| {
                let y = row.remove(li);
                (row, y)
            })
            .unzip())
    }
}

pub fn read_csv_table(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .zip(&header)
            .map(|(cell, column)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::NonNumeric {
                        row: r + 1,
                        column: column.clone(),
                        value: cell.to_string(),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    Ok(CsvTable { header, rows })
}

/// Reads a CSV with a header and splits it 80/20 at random per `seed`.
pub fn load_csv(path: &Path, label_column: &str, seed: u64) -> Result<Dataset> {
    let (rows, labels) = read_csv_table(path)?.into_features_and_labels(label_column)?;
    let n = rows.len();
    let d = rows[0].len();
    let ((train_rows, train_labels), (test_rows, test_labels)) =
        split_by_permutation(rows, labels, seed);
    let mut spec = DatasetSpec::new(Scenario::CsvFile(path.to_path_buf()), n, 0.0, seed);
    spec.d = d;
    Ok(Dataset {
        train_rows,
        train_labels,
        test_rows,
        test_labels,
        provenance: Provenance {
            spec,
            train_fraction: TRAIN_FRACTION,
        },
        trace: GenerationTrace::default(),
    })
}

/// Writes rows under the header `f0,…,f{d-1},label`. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv(path: &Path, rows: &[Vec<f64>], labels: &[f64]) -> Result<()> {
    write_csv_to(std::fs::File::create(path)?, rows, labels)
}

/// [`write_csv`] into any writer.
pub fn write_csv_to<W: std::io::Write>(writer: W, rows: &[Vec<f64>], labels: &[f64]) -> Result<()> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let d = rows.first().map_or(0, Vec::len);
    let mut writer = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    header.push("label".into());
    writer.write_record(&header)?;
    for (row, y) in rows.iter().zip(labels) {
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        writer.write_record(row.iter().chain([y]).map(f64::to_string))?;
    }
    writer.flush()?;
    Ok(())
}
