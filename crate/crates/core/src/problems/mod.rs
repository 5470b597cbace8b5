//! Finite-sum problems with exact per-sample gradient oracles.
//!
//! Every problem here is `f(x) = (1/N) Σ_ξ F(x; ξ)` over a finite sample
//! set, so the stochastic gradient `G(x; ξ) = ∇F(x; ξ)` is unbiased for the
//! full gradient by construction (uniform ξ).

mod least_squares;
mod mlp;
mod quadratic;

pub use least_squares::LeastSquares;
pub use mlp::{make_synthetic_mlp, Mlp, MlpSpec};
pub use quadratic::{NoisyQuadratic, NoisyQuadraticSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param::{dist_sq, norm_sq, ParamVector};
use crate::trace::EvalScope;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample index {index} out of range for {count} samples")]
    SampleOutOfRange { index: usize, count: usize },
    #[error("coordinate {index} out of range for dimension {dim}")]
    CoordinateOutOfRange { index: usize, dim: usize },
    #[error("sample budget must be positive")]
    EmptyBudget,
    #[error("sample budget {budget} exceeds sample count {count}")]
    BudgetTooLarge { budget: usize, count: usize },
    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),
}

/// Whether a constant is exact for the problem or a sampled estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Analytic,
    Estimated,
}

/// Smoothness and noise constants a problem can vouch for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// L: Lipschitz constant of ∇f.
    pub lipschitz: Option<f64>,
    /// L_max: coordinate-wise Lipschitz constant.
    pub lipschitz_max: Option<f64>,
    /// σ²: bound on the gradient-noise variance.
    pub sigma_sq: Option<f64>,
    /// f(x₁) − f(x*), or f(x₁) − 0 for nonnegative losses with unknown optimum.
    pub gap: f64,
    pub provenance: Provenance,
}

/// Objective and squared gradient norm at a checkpoint.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Checkpoint {
    pub f: f64,
    pub gradsq: f64,
}

pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;

    /// Parameter dimension n.
    fn dim(&self) -> usize;

    /// Sample count N; valid sample indices are `0..N`.
    fn sample_count(&self) -> usize;

    fn objective(&self, x: &[f64]) -> Result<f64, ProblemError>;

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError>;

    fn stochastic_gradient_into(
        &self,
        x: &[f64],
        xi: usize,
        out: &mut [f64],
    ) -> Result<(), ProblemError>;

    /// Coordinate `i` of G(x; ξ). Must equal `stochastic_gradient_into(..)[i]`
    /// up to rounding; implementations may skip work the coordinate does not need.
    fn stochastic_partial(&self, x: &[f64], xi: usize, i: usize) -> Result<f64, ProblemError> {
        if i >= self.dim() {
            return Err(ProblemError::CoordinateOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        let mut g = vec![0.0; self.dim()];
        self.stochastic_gradient_into(x, xi, &mut g)?;
        Ok(g[i])
    }

    fn initial_point(&self) -> ParamVector;

    fn constants(&self) -> ProblemConstants;

    /// L_s for supports of size at most `s`, when the problem can compute it.
    fn support_lipschitz(&self, _s: usize) -> Option<f64> {
        None
    }

    /// Metrics recorded at checkpoints. Defaults to the full finite sum.
    fn checkpoint(&self, x: &[f64]) -> Result<Checkpoint, ProblemError> {
        let mut g = vec![0.0; self.dim()];
        self.full_gradient_into(x, &mut g)?;
        Ok(Checkpoint {
            f: self.objective(x)?,
            gradsq: norm_sq(&g),
        })
    }

    /// Gradient of the objective the checkpoints measure (see `eval_scope`).
    fn eval_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError> {
        self.full_gradient_into(x, out)
    }

    fn eval_scope(&self) -> EvalScope {
        EvalScope::Full
    }

    fn full_gradient(&self, x: &[f64]) -> Result<ParamVector, ProblemError> {
        let mut g = ParamVector::zeros(self.dim());
        self.full_gradient_into(x, &mut g)?;
        Ok(g)
    }

    fn stochastic_gradient(&self, x: &[f64], xi: usize) -> Result<ParamVector, ProblemError> {
        let mut g = ParamVector::zeros(self.dim());
        self.stochastic_gradient_into(x, xi, &mut g)?;
        Ok(g)
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), ProblemError> {
    if expected == got {
        Ok(())
    } else {
        Err(ProblemError::DimensionMismatch { expected, got })
    }
}

pub(crate) fn check_sample(index: usize, count: usize) -> Result<(), ProblemError> {
    if index < count {
        Ok(())
    } else {
        Err(ProblemError::SampleOutOfRange { index, count })
    }
}

/// Empirical mean of ‖G(x; ξ) − ∇f(x)‖² over the first `budget` samples.
pub fn estimate_sigma_sq<P: Problem + ?Sized>(
    p: &P,
    x: &[f64],
    budget: usize,
) -> Result<f64, ProblemError> {
    if budget == 0 {
        return Err(ProblemError::EmptyBudget);
    }
    if budget > p.sample_count() {
        return Err(ProblemError::BudgetTooLarge {
            budget,
            count: p.sample_count(),
        });
    }
    let full = p.full_gradient(x)?;
    let mut g = vec![0.0; p.dim()];
    let mut total = 0.0;
    for xi in 0..budget {
        p.stochastic_gradient_into(x, xi, &mut g)?;
        total += dist_sq(&g, &full);
    }
    Ok(total / budget as f64)
}

/// Mean of G(x; ξ) over every sample, summed left to right over ξ.
pub fn sample_mean_gradient<P: Problem + ?Sized>(
    p: &P,
    x: &[f64],
) -> Result<ParamVector, ProblemError> {
    let n = p.dim();
    let mut acc = vec![0.0; n];
    let mut g = vec![0.0; n];
    for xi in 0..p.sample_count() {
        p.stochastic_gradient_into(x, xi, &mut g)?;
        crate::param::add_assign(&mut acc, &g);
    }
    let count = p.sample_count() as f64;
    Ok(acc
        .into_iter()
        .map(|v| v / count)
        .collect::<Vec<_>>()
        .into())
}
