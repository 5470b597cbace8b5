//! Lipschitz constants L, L_s and L_max.
//!
//! For a quadratic with Hessian Q, L_s is the largest spectral norm of a
//! column submatrix Q[:, S] with |S| ≤ s. Adding columns never shrinks a
//! spectral norm, so the maximum is attained at |S| = min(s, n) and we only
//! enumerate supports of that size.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::TheoryError;
use crate::param::dist_sq;
use crate::problems::Problem;
use crate::rng::{derive_stream, Purpose, SeedSpec};

/// Upper bound on supports enumerated for one `s`.
pub const MAX_SUPPORTS: u64 = 250_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessConstants {
    pub l: f64,
    pub l_max: f64,
    /// `l_s[s − 1]` = L_s for s = 1..=n.
    pub l_s: Vec<f64>,
}

impl SmoothnessConstants {
    /// L_s, with s clamped to `[1, n]`.
    pub fn l_s(&self, s: usize) -> f64 {
        let idx = s.clamp(1, self.l_s.len()) - 1;
        self.l_s[idx]
    }
}

fn check_square(q: &DMatrix<f64>) -> Result<usize, TheoryError> {
    if q.nrows() != q.ncols() || q.nrows() == 0 {
        return Err(TheoryError::NotSquare {
            rows: q.nrows(),
            cols: q.ncols(),
        });
    }
    Ok(q.nrows())
}

/// Largest eigenvalue of a symmetric matrix.
fn max_eigenvalue(sym: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Spectral norm of the columns `support` of `q`.
fn column_spectral_norm(q: &DMatrix<f64>, support: &[usize]) -> f64 {
    let s = support.len();
    let mut gram = DMatrix::<f64>::zeros(s, s);
    for a in 0..s {
        let ca = q.column(support[a]);
        for b in a..s {
            let v = ca.dot(&q.column(support[b]));
            gram[(a, b)] = v;
            gram[(b, a)] = v;
        }
    }
    max_eigenvalue(gram).max(0.0).sqrt()
}

/// ‖Q‖₂.
pub fn spectral_norm(q: &DMatrix<f64>) -> Result<f64, TheoryError> {
    let n = check_square(q)?;
    let all: Vec<usize> = (0..n).collect();
    Ok(column_spectral_norm(q, &all))
}

/// L_max = max_i |Q_ii|.
pub fn coordinate_lipschitz(q: &DMatrix<f64>) -> Result<f64, TheoryError> {
    let n = check_square(q)?;
    Ok((0..n).map(|i| q[(i, i)].abs()).fold(0.0, f64::max))
}

fn binomial(n: usize, k: usize) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Advance `idx` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    for pos in (0..k).rev() {
        if idx[pos] < n - k + pos {
            idx[pos] += 1;
            for later in pos + 1..k {
                idx[later] = idx[later - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// L_s by exhaustive enumeration of supports of size `min(s, n)`.
pub fn support_lipschitz(q: &DMatrix<f64>, s: usize) -> Result<f64, TheoryError> {
    let n = check_square(q)?;
    if s == 0 {
        return Err(TheoryError::NonPositive {
            name: "s",
            value: 0.0,
        });
    }
    let size = s.min(n);
    let count = binomial(n, size);
    if count > MAX_SUPPORTS {
        return Err(TheoryError::TooManySupports { n, s: size, count });
    }
    let mut idx: Vec<usize> = (0..size).collect();
    let mut best = 0.0f64;
    loop {
        best = best.max(column_spectral_norm(q, &idx));
        if !next_combination(&mut idx, n) {
            break;
        }
    }
    Ok(best)
}

/// L, L_max and every L_s of the quadratic with Hessian `q`.
pub fn constants_quadratic(q: &DMatrix<f64>) -> Result<SmoothnessConstants, TheoryError> {
    let n = check_square(q)?;
    let l = spectral_norm(q)?;
    let l_max = coordinate_lipschitz(q)?;
    let mut l_s = Vec::with_capacity(n);
    for s in 1..=n {
        // The full support is the spectral norm itself.
        l_s.push(if s == n { l } else { support_lipschitz(q, s)? });
    }
    Ok(SmoothnessConstants { l, l_max, l_s })
}

/// Settings for the sampled Lipschitz estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    /// Perturbation scale around the center point.
    pub radius: f64,
    pub probes: usize,
    pub seed: u64,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings {
            radius: 0.1,
            probes: 16,
            seed: 0,
        }
    }
}

fn eval_gradient<P: Problem + ?Sized>(p: &P, x: &[f64]) -> Result<Vec<f64>, TheoryError> {
    let mut g = vec![0.0; p.dim()];
    p.eval_gradient_into(x, &mut g)?;
    Ok(g)
}

/// Sampled lower estimate of L: the largest ‖∇f(x) − ∇f(y)‖ / ‖x − y‖
/// over random pairs near `center`.
pub fn estimate_lipschitz<P: Problem + ?Sized>(
    p: &P,
    center: &[f64],
    settings: ProbeSettings,
) -> Result<f64, TheoryError> {
    let mut rng = derive_stream(SeedSpec::new(settings.seed), 0, Purpose::Problem);
    let g0 = eval_gradient(p, center)?;
    let mut best = 0.0f64;
    for _ in 0..settings.probes {
        let y: Vec<f64> = center
            .iter()
            .map(|&c| c + settings.radius * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let gy = eval_gradient(p, &y)?;
        let dx = dist_sq(center, &y).sqrt();
        if dx > 0.0 {
            best = best.max(dist_sq(&g0, &gy).sqrt() / dx);
        }
    }
    Ok(best)
}

/// Sampled lower estimate of L_s: perturbations restricted to random
/// supports of size `s`.
pub fn estimate_support_lipschitz<P: Problem + ?Sized>(
    p: &P,
    s: usize,
    center: &[f64],
    settings: ProbeSettings,
) -> Result<f64, TheoryError> {
    let n = p.dim();
    let size = s.clamp(1, n);
    let mut rng = derive_stream(SeedSpec::new(settings.seed), 1, Purpose::Problem);
    let g0 = eval_gradient(p, center)?;
    let mut best = 0.0f64;
    let mut y = center.to_vec();
    for _ in 0..settings.probes {
        y.copy_from_slice(center);
        let mut step_sq = 0.0;
        for _ in 0..size {
            let i = rng.random_range(0..n);
            let a = settings.radius * rng.sample::<f64, _>(StandardNormal);
            y[i] += a;
        }
        for (yi, ci) in y.iter().zip(center) {
            step_sq += (yi - ci) * (yi - ci);
        }
        if step_sq > 0.0 {
            let gy = eval_gradient(p, &y)?;
            best = best.max((dist_sq(&g0, &gy) / step_sq).sqrt());
        }
    }
    Ok(best)
}

/// Sampled lower estimate of L_max from single-coordinate perturbations.
pub fn estimate_coordinate_lipschitz<P: Problem + ?Sized>(
    p: &P,
    center: &[f64],
    settings: ProbeSettings,
) -> Result<f64, TheoryError> {
    let n = p.dim();
    let mut rng = derive_stream(SeedSpec::new(settings.seed), 2, Purpose::Problem);
    let g0 = eval_gradient(p, center)?;
    let mut best = 0.0f64;
    let mut y = center.to_vec();
    for _ in 0..settings.probes {
        let i = rng.random_range(0..n);
        let a = settings.radius * rng.sample::<f64, _>(StandardNormal);
        if a == 0.0 {
            continue;
        }
        y[i] = center[i] + a;
        let gy = eval_gradient(p, &y)?;
        y[i] = center[i];
        best = best.max((gy[i] - g0[i]).abs() / a.abs());
    }
    Ok(best)
}
