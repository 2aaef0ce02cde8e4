//! Residual fusion and minimum-residual decisions.
//!
//! The two views are combined per class by multiplying their residuals. A
//! class that both views find close (residuals below one) gets smaller;
//! a class both find far (above one) gets larger. There is nothing to tune.

use crate::crc::{ResidualSource, ResidualVector};
use crate::error::{Error, Result};

/// How two residual vectors are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionRule {
    /// Element-wise product (the collaborative weight).
    #[default]
    Product,
    /// Element-wise sum. Only kept for comparison runs.
    Sum,
}

impl std::fmt::Display for FusionRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FusionRule::Product => f.write_str("product"),
            FusionRule::Sum => f.write_str("sum"),
        }
    }
}

/// Outcome of a minimum-residual decision.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDecision {
    pub fused: ResidualVector,
    pub predicted_class: usize,
    /// Second-smallest value minus the smallest; zero when `C = 1`.
    pub margin: f64,
    /// Set when there was only one class to choose from.
    pub degenerate: bool,
}

fn check_pair(a: &ResidualVector, b: &ResidualVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Element-wise product `out[i] = a[i] · b[i]`.
pub fn fuse(a: &ResidualVector, b: &ResidualVector) -> Result<ResidualVector> {
    fuse_with(FusionRule::Product, a, b)
}

/// Element-wise sum; see [`FusionRule::Sum`].
pub fn fuse_additive(a: &ResidualVector, b: &ResidualVector) -> Result<ResidualVector> {
    fuse_with(FusionRule::Sum, a, b)
}

pub fn fuse_with(rule: FusionRule, a: &ResidualVector, b: &ResidualVector) -> Result<ResidualVector> {
    check_pair(a, b)?;
    let values = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| match rule {
            FusionRule::Product => x * y,
            FusionRule::Sum => x + y,
        })
        .collect();
    ResidualVector::new(values, ResidualSource::Fused)
}

/// Picks the class with the smallest fused residual; ties go to the lowest index.
pub fn classify(fused: &ResidualVector) -> Result<FusedDecision> {
    decide(fused)
}

/// Same decision rule applied to a single-view residual vector.
pub fn classify_single(res: &ResidualVector) -> Result<FusedDecision> {
    decide(res)
}

fn decide(res: &ResidualVector) -> Result<FusedDecision> {
    let values = res.values();
    if values.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    let runner_up = values
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let degenerate = values.len() == 1;
    Ok(FusedDecision {
        fused: res.clone(),
        predicted_class: best,
        margin: if degenerate { 0.0 } else { runner_up - values[best] },
        degenerate,
    })
}
