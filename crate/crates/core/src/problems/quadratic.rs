use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{check_dim, check_sample, Problem, ProblemConstants, ProblemError, Provenance};
use crate::param::{dot, ParamVector};
use crate::rng::{derive_stream, Purpose, SeedSpec};
use crate::theory;

/// f(x) = ½ (x − x*)ᵀ Q (x − x*) with G(x; ξ) = ∇f(x) + z_ξ.
#[derive(Clone, Debug)]
pub struct NoisyQuadraticSpec {
    pub q: DMatrix<f64>,
    pub x_star: Vec<f64>,
    /// ‖z_ξ‖ for every ξ.
    pub sigma: f64,
    /// Even; noise vectors come in ± pairs.
    pub samples: usize,
    pub x1: Vec<f64>,
}

impl NoisyQuadraticSpec {
    /// Random SPD Hessian with eigenvalues evenly spaced in `[eig_min, eig_max]`,
    /// x* = 0, and x₁ a Gaussian direction scaled to norm `x1_norm`.
    pub fn random(
        n: usize,
        eig_min: f64,
        eig_max: f64,
        sigma: f64,
        samples: usize,
        x1_norm: f64,
        seed: u64,
    ) -> Self {
        let seeds = SeedSpec::new(seed);
        let mut rng = derive_stream(seeds, 0, Purpose::Problem);
        let gauss = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let basis = gauss.qr().q();
        let eig = DMatrix::from_fn(n, n, |i, j| {
            if i != j {
                0.0
            } else if n == 1 {
                eig_max
            } else {
                eig_min + (eig_max - eig_min) * i as f64 / (n - 1) as f64
            }
        });
        let q = &basis * eig * basis.transpose();
        let q = (&q + q.transpose()) * 0.5;

        let mut init = derive_stream(seeds, 0, Purpose::Init);
        let dir: Vec<f64> = (0..n).map(|_| init.sample(StandardNormal)).collect();
        let norm = dot(&dir, &dir).sqrt();
        let x1 = dir.iter().map(|v| v * x1_norm / norm).collect();
        NoisyQuadraticSpec {
            q,
            x_star: vec![0.0; n],
            sigma,
            samples,
            x1,
        }
    }

    /// Q = I in n dimensions.
    pub fn identity(n: usize, sigma: f64, samples: usize, x1: Vec<f64>) -> Self {
        NoisyQuadraticSpec {
            q: DMatrix::identity(n, n),
            x_star: vec![0.0; n],
            sigma,
            samples,
            x1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NoisyQuadratic {
    q: DMatrix<f64>,
    /// Row-major copy of Q for left-to-right row products.
    rows: Vec<f64>,
    x_star: Vec<f64>,
    noise: Vec<f64>,
    sigma: f64,
    samples: usize,
    x1: Vec<f64>,
    lipschitz: f64,
    lipschitz_max: f64,
}

impl NoisyQuadratic {
    pub fn new(spec: NoisyQuadraticSpec, seed: u64) -> Result<Self, ProblemError> {
        let n = spec.q.nrows();
        if n == 0 || spec.q.ncols() != n {
            return Err(ProblemError::InvalidSpec(
                "Q must be square and nonempty".into(),
            ));
        }
        for i in 0..n {
            for j in 0..i {
                if spec.q[(i, j)] != spec.q[(j, i)] {
                    return Err(ProblemError::InvalidSpec("Q must be symmetric".into()));
                }
            }
        }
        check_dim(n, spec.x_star.len())?;
        check_dim(n, spec.x1.len())?;
        if spec.samples < 2 || !spec.samples.is_multiple_of(2) {
            return Err(ProblemError::InvalidSpec(
                "sample count must be even and at least 2".into(),
            ));
        }
        if !(spec.sigma.is_finite() && spec.sigma >= 0.0) {
            return Err(ProblemError::InvalidSpec(
                "sigma must be finite and >= 0".into(),
            ));
        }

        let mut rng = derive_stream(SeedSpec::new(seed), 1, Purpose::Problem);
        let mut noise = vec![0.0; spec.samples * n];
        for pair in 0..spec.samples / 2 {
            let v = loop {
                let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dot(&v, &v).sqrt();
                if norm > 1e-8 {
                    break v
                        .into_iter()
                        .map(|x| x * spec.sigma / norm)
                        .collect::<Vec<_>>();
                }
            };
            let plus = 2 * pair * n;
            let minus = plus + n;
            for i in 0..n {
                noise[plus + i] = v[i];
                noise[minus + i] = -v[i];
            }
        }

        let rows = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| spec.q[(i, j)])
            .collect();
        let lipschitz = theory::spectral_norm(&spec.q).expect("square checked above");
        let lipschitz_max = theory::coordinate_lipschitz(&spec.q).expect("square checked above");
        Ok(NoisyQuadratic {
            q: spec.q,
            rows,
            x_star: spec.x_star,
            noise,
            sigma: spec.sigma,
            samples: spec.samples,
            x1: spec.x1,
            lipschitz,
            lipschitz_max,
        })
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn noise(&self, xi: usize) -> &[f64] {
        let n = self.x_star.len();
        &self.noise[xi * n..(xi + 1) * n]
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.x_star.len();
        &self.rows[i * n..(i + 1) * n]
    }

    fn offset(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x_star).map(|(a, b)| a - b).collect()
    }
}

impl Problem for NoisyQuadratic {
    fn name(&self) -> &'static str {
        "noisy_quadratic"
    }

    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn sample_count(&self) -> usize {
        self.samples
    }

    fn objective(&self, x: &[f64]) -> Result<f64, ProblemError> {
        check_dim(self.dim(), x.len())?;
        let d = self.offset(x);
        let mut acc = 0.0;
        for (i, di) in d.iter().enumerate() {
            acc += di * dot(self.row(i), &d);
        }
        Ok(0.5 * acc)
    }

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), out.len())?;
        let d = self.offset(x);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), &d);
        }
        Ok(())
    }

    fn stochastic_gradient_into(
        &self,
        x: &[f64],
        xi: usize,
        out: &mut [f64],
    ) -> Result<(), ProblemError> {
        check_sample(xi, self.samples)?;
        self.full_gradient_into(x, out)?;
        for (o, z) in out.iter_mut().zip(self.noise(xi)) {
            *o += z;
        }
        Ok(())
    }

    fn stochastic_partial(&self, x: &[f64], xi: usize, i: usize) -> Result<f64, ProblemError> {
        check_dim(self.dim(), x.len())?;
        check_sample(xi, self.samples)?;
        if i >= self.dim() {
            return Err(ProblemError::CoordinateOutOfRange {
                index: i,
                dim: self.dim(),
            });
        }
        let d = self.offset(x);
        Ok(dot(self.row(i), &d) + self.noise(xi)[i])
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::from_vec(self.x1.clone())
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            lipschitz: Some(self.lipschitz),
            lipschitz_max: Some(self.lipschitz_max),
            sigma_sq: Some(self.sigma * self.sigma),
            gap: self
                .objective(&self.x1)
                .expect("x1 has the problem dimension"),
            provenance: Provenance::Analytic,
        }
    }

    fn support_lipschitz(&self, s: usize) -> Option<f64> {
        theory::support_lipschitz(&self.q, s).ok()
    }
}
