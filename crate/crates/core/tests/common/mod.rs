//! Oracles shared by the integration tests and the acceptance runner.
//! Nothing here calls into the library's own eigen or simulation code.
#![allow(dead_code)]

use asysg_core::sim::ChoiceSource;
use asysg_core::Problem;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i][j] * m[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k][p];
                    let mkq = m[k][q];
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p][k];
                    let mqk = m[q][k];
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
            }
        }
    }
    (0..n).map(|i| m[i][i]).collect()
}

/// Spectral norm of the column submatrix `q[:, support]` via the Gram matrix.
pub fn column_norm(q: &[Vec<f64>], support: &[usize]) -> f64 {
    let n = q.len();
    let gram: Vec<Vec<f64>> = support
        .iter()
        .map(|&a| {
            support
                .iter()
                .map(|&b| (0..n).map(|r| q[r][a] * q[r][b]).sum())
                .collect()
        })
        .collect();
    jacobi_eigenvalues(&gram)
        .into_iter()
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// L_s by enumerating every nonempty support of size at most `s`.
pub fn brute_support_lipschitz(q: &[Vec<f64>], s: usize) -> f64 {
    let n = q.len();
    let mut best = 0.0f64;
    for mask in 1u32..(1 << n) {
        if mask.count_ones() as usize > s {
            continue;
        }
        let support: Vec<usize> = (0..n).filter(|&i| mask & (1 << i) != 0).collect();
        best = best.max(column_norm(q, &support));
    }
    best
}

pub fn to_rows(q: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..q.nrows())
        .map(|i| (0..q.ncols()).map(|j| q[(i, j)]).collect())
        .collect()
}

/// Passes choices through from an inner source and remembers them.
pub struct Recording<C> {
    pub inner: C,
    pub minibatch: usize,
    pub samples: Vec<usize>,
    pub coordinates: Vec<usize>,
    pub reads: Vec<Vec<usize>>,
}

impl<C: ChoiceSource> Recording<C> {
    pub fn new(inner: C, minibatch: usize) -> Self {
        Recording {
            inner,
            minibatch,
            samples: Vec::new(),
            coordinates: Vec::new(),
            reads: Vec::new(),
        }
    }
}

fn put<T: Clone + Default>(v: &mut Vec<T>, at: usize, value: T) {
    if v.len() <= at {
        v.resize(at + 1, T::default());
    }
    v[at] = value;
}

impl<C: ChoiceSource> ChoiceSource for Recording<C> {
    fn sample(&mut self, k: usize, m: usize, count: usize) -> usize {
        let s = self.inner.sample(k, m, count);
        put(&mut self.samples, k * self.minibatch + m, s);
        s
    }
    fn coordinate(&mut self, k: usize, dim: usize) -> usize {
        let i = self.inner.coordinate(k, dim);
        put(&mut self.coordinates, k, i);
        i
    }
    fn support_position(&mut self, k: usize, len: usize) -> usize {
        self.inner.support_position(k, len)
    }
    fn delay(&mut self, k: usize, m: usize) -> usize {
        self.inner.delay(k, m)
    }
    fn read_set(&mut self, k: usize, m: usize, out: &mut Vec<usize>) {
        self.inner.read_set(k, m, out);
        put(&mut self.reads, k * self.minibatch + m, out.clone());
    }
}

/// Inconsistent-read iteration computed from the full stored history:
/// x̂ = x_k − Σ_{j∈J} (x_{j+1} − x_j), gradient from the full oracle.
pub fn incon_reference<P: Problem>(
    p: &P,
    gamma: f64,
    iterations: usize,
    minibatch: usize,
    samples: &[usize],
    coordinates: &[usize],
    reads: &[Vec<usize>],
) -> Vec<Vec<f64>> {
    let n = p.dim();
    let mut xs: Vec<Vec<f64>> = vec![p.initial_point().into_vec()];
    for k in 0..iterations {
        let i = coordinates[k];
        let mut step = 0.0;
        for m in 0..minibatch {
            let at = k * minibatch + m;
            let mut xhat = xs[k].clone();
            for &j in &reads[at] {
                for c in 0..n {
                    xhat[c] -= xs[j + 1][c] - xs[j][c];
                }
            }
            let g = p.stochastic_gradient(&xhat, samples[at]).unwrap();
            step += g.as_slice()[i];
        }
        let mut next = xs[k].clone();
        next[i] -= gamma * step;
        xs.push(next);
    }
    xs
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
