//! Steplength rules, step-size conditions and convergence-bound values for
//! the consistent-read (AsySG-con) and inconsistent-read (AsySG-incon)
//! analyses.

mod bounds;
mod report;
mod resolve;
mod smoothness;

pub use bounds::{
    bound_con, bound_incon, check_condition_thm1, check_condition_thm3, condition_thm1_value,
    condition_thm3_value, k_threshold_corollary2, k_threshold_corollary4, steplength_corollary2,
    steplength_corollary4, ConBound, InconBound, Schedule,
};
pub use report::{theory_report, TheoryInputs, TheoryReport};
pub use resolve::{delay_support_lipschitz, resolve_gamma, theory_inputs};
pub use smoothness::{
    constants_quadratic, coordinate_lipschitz, estimate_coordinate_lipschitz, estimate_lipschitz,
    estimate_support_lipschitz, spectral_norm, support_lipschitz, ProbeSettings,
    SmoothnessConstants, MAX_SUPPORTS,
};

use thiserror::Error;

use crate::problems::ProblemError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("matrix must be square and nonempty, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("too many supports to enumerate: C({n}, {s}) = {count}")]
    TooManySupports { n: usize, s: usize, count: u64 },
    #[error("steplength violates the {which} condition (value {value} > 1)")]
    ConditionViolated { which: &'static str, value: f64 },
    #[error("K = {k} is below the corollary threshold {k_min}")]
    BelowThreshold { k: u64, k_min: u64 },
    #[error("missing constant {0}")]
    MissingConstant(&'static str),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64, TheoryError> {
    if !value.is_finite() {
        return Err(TheoryError::NonFinite { name, value });
    }
    if value <= 0.0 {
        return Err(TheoryError::NonPositive { name, value });
    }
    Ok(value)
}
