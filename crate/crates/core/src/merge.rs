//! Collapsing a regression interval `[ŷ_*, ŷ^*]` to a single estimate.
//!
//! Both rules balance the worst-case excess squared loss against the
//! ambient anchors `y_* <= ŷ_* <= ŷ^* <= y^*`: the exact rule solves the
//! balance equation
//!
//! ```text
//! (ŷ - y_*)² - (ŷ_* - y_*)² = (y^* - ŷ)² - (y^* - ŷ^*)²
//! ```
//!
//! and the approximate rule drops its quadratic terms, which leaves a
//! weighted average of the endpoints.

use std::str::FromStr;

use crate::vennabers::RegressionInterval;
use crate::{Error, Result};

/// Relative slack tolerated on the ordering `y_* <= ŷ_* <= ŷ^* <= y^*`.
const ORDER_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeInput {
    pub y_low: f64,
    pub y_high: f64,
    pub interval: RegressionInterval,
}

impl MergeInput {
    pub fn new(y_low: f64, y_high: f64, lower: f64, upper: f64) -> Self {
        Self {
            y_low,
            y_high,
            interval: RegressionInterval { lower, upper },
        }
    }

    /// Checks finiteness and ordering; endpoints that overshoot an anchor by
    /// rounding noise are pulled back onto it.
    fn normalized(&self) -> Result<Self> {
        let Self {
            y_low,
            y_high,
            interval: RegressionInterval { lower, upper },
        } = *self;
        if ![y_low, y_high, lower, upper].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = y_low.abs().max(y_high.abs()).max(1.0);
        let slack = ORDER_SLACK * scale;
        if !(y_low <= lower + slack && lower <= upper + slack && upper <= y_high + slack) {
            return Err(Error::MergeOrder {
                y_low,
                lower,
                upper,
                y_high,
            });
        }
        let lower = lower.clamp(y_low, y_high);
        let upper = upper.clamp(lower, y_high);
        Ok(Self::new(y_low, y_high, lower, upper))
    }
}

/// Result of the approximate merge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergedPoint {
    pub value: f64,
    /// Set when both endpoints touch their anchors and the interval midpoint
    /// was returned instead.
    pub midpoint_fallback: bool,
}

/// Exact minimax point.
pub fn merge_exact(input: &MergeInput) -> Result<f64> {
    if input.y_low == input.y_high && input.interval.lower != input.interval.upper {
        return Err(Error::DegenerateAnchors);
    }
    let MergeInput {
        y_low,
        y_high,
        interval: RegressionInterval { lower, upper },
    } = input.normalized()?;
    if lower == upper {
        return Ok(lower);
    }
    let v = (lower * lower - upper * upper + 2.0 * upper * y_high - 2.0 * lower * y_low)
        / (2.0 * (y_high - y_low));
    Ok(v.clamp(lower, upper))
}

/// Weighted average of the endpoints; falls back to the midpoint when both
/// weights vanish.
pub fn merge_approx(input: &MergeInput) -> Result<MergedPoint> {
    let MergeInput {
        y_low,
        y_high,
        interval: RegressionInterval { lower, upper },
    } = input.normalized()?;
    let w_lower = lower - y_low;
    let w_upper = y_high - upper;
    let denom = w_lower + w_upper;
    if denom <= 0.0 {
        return Ok(MergedPoint {
            value: 0.5 * (lower + upper),
            midpoint_fallback: true,
        });
    }
    let value = (w_lower * lower + w_upper * upper) / denom;
    Ok(MergedPoint {
        value: value.clamp(lower, upper),
        midpoint_fallback: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeMode {
    Exact,
    #[default]
    Approx,
}

impl MergeMode {
    pub fn merge(&self, input: &MergeInput) -> Result<f64> {
        match self {
            Self::Exact => merge_exact(input),
            Self::Approx => merge_approx(input).map(|p| p.value),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Exact => "exact",
            Self::Approx => "approx",
        }
    }
}

impl FromStr for MergeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(Self::Exact),
            "approx" => Ok(Self::Approx),
            other => Err(Error::InvalidParameter(format!(
                "unknown merge mode `{other}` (expected exact or approx)"
            ))),
        }
    }
}
