//! Venn–Abers regression.
//!
//! Isotonic-regression-based interval regressors for real-valued labels,
//! together with the machinery around them:
//!
//! * [`isotonic`]: weighted pool-adjacent-violators fits, the cumulative sum
//!   diagram and the extended calibrators evaluated in `O(log k)` per query.
//! * [`vennabers`]: bounded and unbounded inductive Venn–Abers regressors,
//!   label Winsorization and the finite auto-calibration probe.
//! * [`merge`]: minimax collapse of a regression interval to a point.
//! * [`cvar`]: cross Venn–Abers regressors (K-fold, mean of merged points).
//! * [`baselines`]: least squares, ridge and k-NN base regressors.
//! * [`datagen`]: seeded synthetic scenarios and CSV ingestion.
//! * [`bench`]: the repeated-trial RMSE harness and report rendering.
//! * [`probe`]: randomized auto-calibration and coverage checks.

pub mod baselines;
pub mod bench;
pub mod cvar;
pub mod datagen;
mod error;
pub mod isotonic;
pub mod merge;
pub mod probe;
pub mod vennabers;

pub use error::{Error, Result};
