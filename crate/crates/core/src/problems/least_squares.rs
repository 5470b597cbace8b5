use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_dim, check_sample, Problem, ProblemConstants, ProblemError, Provenance};
use crate::param::{add_assign, dist_sq, dot, ParamVector};
use crate::rng::{derive_stream, Purpose, SeedSpec};
use crate::theory;

/// f(x) = (1/N) Σ_i ½ (a_iᵀ x − b_i)².
#[derive(Clone, Debug)]
pub struct LeastSquares {
    n: usize,
    /// Row-major N × n design matrix.
    a: Vec<f64>,
    b: Vec<f64>,
    x1: Vec<f64>,
    hessian: DMatrix<f64>,
    minimizer: Option<Vec<f64>>,
}

impl LeastSquares {
    pub fn new(rows: Vec<Vec<f64>>, b: Vec<f64>, x1: Vec<f64>) -> Result<Self, ProblemError> {
        let n = x1.len();
        if rows.is_empty() || n == 0 {
            return Err(ProblemError::InvalidSpec(
                "least squares needs at least one sample and one parameter".into(),
            ));
        }
        check_dim(rows.len(), b.len())?;
        let mut a = Vec::with_capacity(rows.len() * n);
        for row in &rows {
            check_dim(n, row.len())?;
            a.extend_from_slice(row);
        }
        let count = rows.len() as f64;
        let design = DMatrix::from_row_slice(rows.len(), n, &a);
        let hessian = design.transpose() * &design / count;
        let rhs = design.transpose() * DVector::from_vec(b.clone()) / count;
        let minimizer = hessian
            .clone()
            .cholesky()
            .map(|c| c.solve(&rhs).iter().copied().collect());
        Ok(LeastSquares {
            n,
            a,
            b,
            x1,
            hessian,
            minimizer,
        })
    }

    /// Gaussian design, b = A·x_true + noise·N(0, 1), x₁ = 0.
    pub fn random(n: usize, samples: usize, noise: f64, seed: u64) -> Result<Self, ProblemError> {
        let seeds = SeedSpec::new(seed);
        let mut rng = derive_stream(seeds, 0, Purpose::Data);
        let mut truth_rng = derive_stream(seeds, 0, Purpose::Problem);
        let truth: Vec<f64> = (0..n).map(|_| truth_rng.sample(StandardNormal)).collect();
        let mut rows = Vec::with_capacity(samples);
        let mut b = Vec::with_capacity(samples);
        for _ in 0..samples {
            let row: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let eps: f64 = rng.sample(StandardNormal);
            b.push(dot(&row, &truth) + noise * eps);
            rows.push(row);
        }
        LeastSquares::new(rows, b, vec![0.0; n])
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn minimizer(&self) -> Option<&[f64]> {
        self.minimizer.as_deref()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    fn residual(&self, x: &[f64], i: usize) -> f64 {
        dot(self.row(i), x) - self.b[i]
    }

    /// Exact population variance (1/N) Σ ‖G(x; i) − ∇f(x)‖².
    fn variance_at(&self, x: &[f64]) -> f64 {
        let full = self.full_gradient(x).expect("dimension fixed");
        let mut g = vec![0.0; self.n];
        let mut total = 0.0;
        for i in 0..self.b.len() {
            self.stochastic_gradient_into(x, i, &mut g)
                .expect("index in range");
            total += dist_sq(&g, &full);
        }
        total / self.b.len() as f64
    }
}

impl Problem for LeastSquares {
    fn name(&self) -> &'static str {
        "least_squares"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn sample_count(&self) -> usize {
        self.b.len()
    }

    fn objective(&self, x: &[f64]) -> Result<f64, ProblemError> {
        check_dim(self.n, x.len())?;
        let total = (0..self.b.len()).fold(0.0, |acc, i| {
            let r = self.residual(x, i);
            acc + 0.5 * r * r
        });
        Ok(total / self.b.len() as f64)
    }

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError> {
        check_dim(self.n, x.len())?;
        check_dim(self.n, out.len())?;
        out.fill(0.0);
        let mut g = vec![0.0; self.n];
        for i in 0..self.b.len() {
            self.stochastic_gradient_into(x, i, &mut g)?;
            add_assign(out, &g);
        }
        let count = self.b.len() as f64;
        for o in out.iter_mut() {
            *o /= count;
        }
        Ok(())
    }

    fn stochastic_gradient_into(
        &self,
        x: &[f64],
        xi: usize,
        out: &mut [f64],
    ) -> Result<(), ProblemError> {
        check_dim(self.n, x.len())?;
        check_dim(self.n, out.len())?;
        check_sample(xi, self.b.len())?;
        let r = self.residual(x, xi);
        for (o, a) in out.iter_mut().zip(self.row(xi)) {
            *o = a * r;
        }
        Ok(())
    }

    fn stochastic_partial(&self, x: &[f64], xi: usize, i: usize) -> Result<f64, ProblemError> {
        check_dim(self.n, x.len())?;
        check_sample(xi, self.b.len())?;
        if i >= self.n {
            return Err(ProblemError::CoordinateOutOfRange {
                index: i,
                dim: self.n,
            });
        }
        Ok(self.row(xi)[i] * self.residual(x, xi))
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::from_vec(self.x1.clone())
    }

    /// L, L_max exact from the Hessian. σ² is not uniformly bounded for
    /// least squares, so it is the larger exact variance at x₁ and x*.
    fn constants(&self) -> ProblemConstants {
        let f1 = self.objective(&self.x1).expect("dimension fixed");
        let (gap, sigma_sq) = match &self.minimizer {
            Some(xs) => {
                let fs = self.objective(xs).expect("dimension fixed");
                (
                    (f1 - fs).max(0.0),
                    self.variance_at(&self.x1).max(self.variance_at(xs)),
                )
            }
            None => (f1, self.variance_at(&self.x1)),
        };
        ProblemConstants {
            lipschitz: theory::spectral_norm(&self.hessian).ok(),
            lipschitz_max: theory::coordinate_lipschitz(&self.hessian).ok(),
            sigma_sq: Some(sigma_sq),
            gap,
            provenance: Provenance::Estimated,
        }
    }

    fn support_lipschitz(&self, s: usize) -> Option<f64> {
        theory::support_lipschitz(&self.hessian, s).ok()
    }
}
