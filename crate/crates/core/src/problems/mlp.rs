//! Fully connected tanh network with a linear output layer and squared loss.
//!
//! Parameter layout, layer by layer from the input: the weight matrix stored
//! `[fan_in][fan_out]` row-major, followed by the layer's bias vector. For
//! widths 400×100×50×20×10 that is 46,200 weights + 180 biases = 46,380.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_sample, Problem, ProblemConstants, ProblemError, Provenance};
use crate::param::{add_assign, dist_sq, norm_sq, ParamVector};
use crate::problems::Checkpoint;
use crate::rng::{derive_stream, Purpose, SeedSpec};
use crate::theory::{self, ProbeSettings};
use crate::trace::EvalScope;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub samples: usize,
    /// Standard deviation of the Gaussian noise added to every target entry.
    pub noise_std: f64,
    /// Samples used for checkpoint metrics when the dataset is large.
    pub eval_samples: usize,
    /// Datasets up to this size are always evaluated in full.
    pub full_eval_max: usize,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            widths: vec![400, 100, 50, 20, 10],
            samples: 46_380,
            noise_std: 1.0,
            eval_samples: 512,
            full_eval_max: 4096,
        }
    }
}

impl MlpSpec {
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Same shape with `samples` samples.
    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    fn validate(&self) -> Result<(), ProblemError> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(ProblemError::InvalidSpec(
                "mlp needs at least two nonzero layer widths".into(),
            ));
        }
        if self.samples == 0 {
            return Err(ProblemError::InvalidSpec(
                "mlp needs at least one sample".into(),
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(ProblemError::InvalidSpec(
                "noise_std must be finite and >= 0".into(),
            ));
        }
        if self.eval_samples == 0 {
            return Err(ProblemError::InvalidSpec(
                "eval_samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Layer {
    fan_in: usize,
    fan_out: usize,
    weights: usize,
    bias: usize,
}

impl Layer {
    fn end(&self) -> usize {
        self.bias + self.fan_out
    }
}

#[derive(Debug)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    n: usize,
    inputs: Vec<f32>,
    targets: Vec<f64>,
    true_params: Vec<f64>,
    x1: Vec<f64>,
    eval_count: usize,
    constants: OnceLock<ProblemConstants>,
}

/// Build the synthetic regression problem: Gaussian inputs and generating
/// weights, targets = network output + Gaussian noise.
pub fn make_synthetic_mlp(spec: MlpSpec, seed: u64) -> Result<Mlp, ProblemError> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.widths.len() - 1);
    let mut offset = 0;
    for w in spec.widths.windows(2) {
        let layer = Layer {
            fan_in: w[0],
            fan_out: w[1],
            weights: offset,
            bias: offset + w[0] * w[1],
        };
        offset = layer.end();
        layers.push(layer);
    }
    let n = offset;
    let seeds = SeedSpec::new(seed);

    let mut truth_rng = derive_stream(seeds, 0, Purpose::Problem);
    let true_params: Vec<f64> = (0..n).map(|_| truth_rng.sample(StandardNormal)).collect();

    let mut init_rng = derive_stream(seeds, 0, Purpose::Init);
    let mut x1 = vec![0.0; n];
    for layer in &layers {
        let scale = (1.0 / layer.fan_in as f64).sqrt();
        for w in &mut x1[layer.weights..layer.bias] {
            *w = scale * init_rng.sample::<f64, _>(StandardNormal);
        }
    }

    let d_in = spec.widths[0];
    let d_out = *spec.widths.last().expect("validated");
    let mut input_rng = derive_stream(seeds, 0, Purpose::Data);
    let inputs: Vec<f32> = (0..spec.samples * d_in)
        .map(|_| input_rng.sample::<f32, _>(StandardNormal))
        .collect();

    let mut mlp = Mlp {
        eval_count: if spec.samples <= spec.full_eval_max {
            spec.samples
        } else {
            spec.eval_samples.min(spec.samples)
        },
        spec,
        layers,
        n,
        inputs,
        targets: Vec::new(),
        true_params,
        x1,
        constants: OnceLock::new(),
    };

    let mut noise_rng = derive_stream(seeds, 1, Purpose::Data);
    let mut targets = Vec::with_capacity(mlp.spec.samples * d_out);
    let mut acts = mlp.workspace();
    for xi in 0..mlp.spec.samples {
        mlp.forward(&mlp.true_params, xi, &mut acts);
        for &o in acts.last().expect("nonempty") {
            targets.push(o + mlp.spec.noise_std * noise_rng.sample::<f64, _>(StandardNormal));
        }
    }
    mlp.targets = targets;
    Ok(mlp)
}

impl Mlp {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn input(&self, xi: usize) -> &[f32] {
        let d = self.spec.widths[0];
        &self.inputs[xi * d..(xi + 1) * d]
    }

    pub fn target(&self, xi: usize) -> &[f64] {
        let d = self.d_out();
        &self.targets[xi * d..(xi + 1) * d]
    }

    /// The weights that generated the targets.
    pub fn true_params(&self) -> &[f64] {
        &self.true_params
    }

    /// Samples `0..eval_count` back the checkpoint metrics.
    pub fn eval_count(&self) -> usize {
        self.eval_count
    }

    fn d_out(&self) -> usize {
        *self.spec.widths.last().expect("validated")
    }

    fn workspace(&self) -> Vec<Vec<f64>> {
        self.spec.widths.iter().map(|&w| vec![0.0; w]).collect()
    }

    /// Fill `acts[l]` with the activations entering layer `l`; the last
    /// entry holds the network output.
    fn forward(&self, x: &[f64], xi: usize, acts: &mut [Vec<f64>]) {
        for (a, &v) in acts[0].iter_mut().zip(self.input(xi)) {
            *a = v as f64;
        }
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (lower, upper) = acts.split_at_mut(l + 1);
            let a_in = &lower[l];
            let out = &mut upper[0];
            out.copy_from_slice(&x[layer.bias..layer.end()]);
            for (j, &a) in a_in.iter().enumerate() {
                let row = &x[layer.weights + j * layer.fan_out..][..layer.fan_out];
                for (o, &w) in out.iter_mut().zip(row) {
                    *o += a * w;
                }
            }
            if l < last {
                for o in out.iter_mut() {
                    *o = o.tanh();
                }
            }
        }
    }

    fn loss(&self, out: &[f64], xi: usize) -> f64 {
        dist_sq(out, self.target(xi)) / self.d_out() as f64
    }

    fn output_delta(&self, out: &[f64], xi: usize, delta: &mut [f64]) {
        let scale = 2.0 / self.d_out() as f64;
        for ((d, &o), &y) in delta.iter_mut().zip(out).zip(self.target(xi)) {
            *d = scale * (o - y);
        }
    }

    /// δ for the layer below `l`, given δ for layer `l`.
    fn backprop(
        &self,
        x: &[f64],
        l: usize,
        acts: &[Vec<f64>],
        delta: &[f64],
        below: &mut Vec<f64>,
    ) {
        let layer = self.layers[l];
        below.clear();
        for (j, &a) in acts[l].iter().enumerate() {
            let row = &x[layer.weights + j * layer.fan_out..][..layer.fan_out];
            let s = row.iter().zip(delta).fold(0.0, |acc, (&w, &d)| acc + w * d);
            below.push(s * (1.0 - a * a));
        }
    }

    /// Add G(x; ξ) into `out` (when `accumulate`) or overwrite it.
    fn sample_gradient(
        &self,
        x: &[f64],
        xi: usize,
        out: &mut [f64],
        acts: &mut [Vec<f64>],
        accumulate: bool,
    ) -> f64 {
        self.forward(x, xi, acts);
        let mut delta = vec![0.0; self.d_out()];
        let output = acts.last().expect("nonempty");
        let loss = self.loss(output, xi);
        self.output_delta(output, xi, &mut delta);
        let mut below = Vec::new();
        for l in (0..self.layers.len()).rev() {
            let layer = self.layers[l];
            for (j, &a) in acts[l].iter().enumerate() {
                let row = &mut out[layer.weights + j * layer.fan_out..][..layer.fan_out];
                if accumulate {
                    for (g, &d) in row.iter_mut().zip(&delta) {
                        *g += a * d;
                    }
                } else {
                    for (g, &d) in row.iter_mut().zip(&delta) {
                        *g = a * d;
                    }
                }
            }
            let bias = &mut out[layer.bias..layer.end()];
            if accumulate {
                add_assign(bias, &delta);
            } else {
                bias.copy_from_slice(&delta);
            }
            if l > 0 {
                self.backprop(x, l, acts, &delta, &mut below);
                std::mem::swap(&mut delta, &mut below);
            }
        }
        loss
    }

    /// Mean loss and gradient over samples `0..count`.
    fn mean_over(&self, x: &[f64], count: usize, out: &mut [f64]) -> f64 {
        out.fill(0.0);
        let mut acts = self.workspace();
        let mut total = 0.0;
        for xi in 0..count {
            total += self.sample_gradient(x, xi, out, &mut acts, true);
        }
        for g in out.iter_mut() {
            *g /= count as f64;
        }
        total / count as f64
    }

    fn mean_loss(&self, x: &[f64], count: usize) -> f64 {
        let mut acts = self.workspace();
        let mut total = 0.0;
        for xi in 0..count {
            self.forward(x, xi, &mut acts);
            total += self.loss(acts.last().expect("nonempty"), xi);
        }
        total / count as f64
    }

    fn estimate_constants(&self) -> ProblemConstants {
        let x1 = &self.x1;
        let probes = ProbeSettings {
            radius: 0.05,
            probes: 8,
            seed: 1,
        };
        let lipschitz = theory::estimate_lipschitz(self, x1, probes).ok();
        let lipschitz_max = theory::estimate_coordinate_lipschitz(self, x1, probes).ok();
        // Spread of per-sample gradients around their mean on the eval set.
        let budget = self.eval_count.min(256);
        let mut mean = vec![0.0; self.n];
        self.mean_over(x1, budget, &mut mean);
        let mut g = vec![0.0; self.n];
        let mut acts = self.workspace();
        let mut total = 0.0;
        for xi in 0..budget {
            self.sample_gradient(x1, xi, &mut g, &mut acts, false);
            total += dist_sq(&g, &mean);
        }
        ProblemConstants {
            lipschitz,
            lipschitz_max,
            sigma_sq: Some(total / budget as f64),
            gap: self.mean_loss(x1, self.eval_count),
            provenance: Provenance::Estimated,
        }
    }
}

impl Problem for Mlp {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn sample_count(&self) -> usize {
        self.spec.samples
    }

    fn objective(&self, x: &[f64]) -> Result<f64, ProblemError> {
        check_dim(self.n, x.len())?;
        Ok(self.mean_loss(x, self.spec.samples))
    }

    fn full_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError> {
        check_dim(self.n, x.len())?;
        check_dim(self.n, out.len())?;
        self.mean_over(x, self.spec.samples, out);
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
        check_sample(xi, self.spec.samples)?;
        let mut acts = self.workspace();
        self.sample_gradient(x, xi, out, &mut acts, false);
        Ok(())
    }

    /// Backpropagates only down to the layer that owns coordinate `i`.
    fn stochastic_partial(&self, x: &[f64], xi: usize, i: usize) -> Result<f64, ProblemError> {
        check_dim(self.n, x.len())?;
        check_sample(xi, self.spec.samples)?;
        if i >= self.n {
            return Err(ProblemError::CoordinateOutOfRange {
                index: i,
                dim: self.n,
            });
        }
        let target = self
            .layers
            .iter()
            .position(|layer| i < layer.end())
            .expect("i < n");
        let mut acts = self.workspace();
        self.forward(x, xi, &mut acts);
        let mut delta = vec![0.0; self.d_out()];
        self.output_delta(acts.last().expect("nonempty"), xi, &mut delta);
        let mut below = Vec::new();
        for l in (target + 1..self.layers.len()).rev() {
            self.backprop(x, l, &acts, &delta, &mut below);
            std::mem::swap(&mut delta, &mut below);
        }
        let layer = self.layers[target];
        Ok(if i >= layer.bias {
            delta[i - layer.bias]
        } else {
            let k = i - layer.weights;
            acts[target][k / layer.fan_out] * delta[k % layer.fan_out]
        })
    }

    fn initial_point(&self) -> ParamVector {
        ParamVector::from_vec(self.x1.clone())
    }

    /// Sampled estimates, computed once on first use.
    fn constants(&self) -> ProblemConstants {
        self.constants
            .get_or_init(|| self.estimate_constants())
            .clone()
    }

    fn support_lipschitz(&self, s: usize) -> Option<f64> {
        let probes = ProbeSettings {
            radius: 0.05,
            probes: 8,
            seed: 2,
        };
        theory::estimate_support_lipschitz(self, s, &self.x1, probes).ok()
    }

    fn checkpoint(&self, x: &[f64]) -> Result<Checkpoint, ProblemError> {
        check_dim(self.n, x.len())?;
        let mut g = vec![0.0; self.n];
        let f = self.mean_over(x, self.eval_count, &mut g);
        Ok(Checkpoint {
            f,
            gradsq: norm_sq(&g),
        })
    }

    fn eval_gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<(), ProblemError> {
        check_dim(self.n, x.len())?;
        check_dim(self.n, out.len())?;
        self.mean_over(x, self.eval_count, out);
        Ok(())
    }

    fn eval_scope(&self) -> EvalScope {
        if self.eval_count == self.spec.samples {
            EvalScope::Full
        } else {
            EvalScope::Subsample {
                samples: self.eval_count,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::sample_mean_gradient;

    fn small(samples: usize) -> Mlp {
        let spec = MlpSpec {
            widths: vec![6, 5, 4, 3],
            samples,
            noise_std: 0.5,
            eval_samples: 8,
            full_eval_max: 64,
        };
        make_synthetic_mlp(spec, 3).unwrap()
    }

    #[test]
    fn default_shape_has_46380_parameters() {
        assert_eq!(MlpSpec::default().param_count(), 46_380);
    }

    #[test]
    fn per_sample_mean_equals_full_gradient() {
        let p = small(40);
        let x = p.initial_point();
        let mean = sample_mean_gradient(&p, &x).unwrap();
        let full = p.full_gradient(&x).unwrap();
        assert_eq!(mean, full);
    }

    #[test]
    fn partial_matches_gradient_entries() {
        let p = small(5);
        let x = p.initial_point();
        for xi in 0..5 {
            let g = p.stochastic_gradient(&x, xi).unwrap();
            for i in 0..p.dim() {
                let d = p.stochastic_partial(&x, xi, i).unwrap();
                assert!((d - g[i]).abs() <= 1e-14 * (1.0 + g[i].abs()), "coord {i}");
            }
        }
    }

    #[test]
    fn large_datasets_use_the_eval_subsample() {
        let p = small(100);
        assert_eq!(p.eval_scope(), EvalScope::Subsample { samples: 8 });
        let small_set = small(20);
        assert_eq!(small_set.eval_scope(), EvalScope::Full);
    }

    #[test]
    fn constants_are_labeled_estimates() {
        let p = small(30);
        let c = p.constants();
        assert_eq!(c.provenance, Provenance::Estimated);
        assert!(c.lipschitz.unwrap() > 0.0 && c.sigma_sq.unwrap() > 0.0);
        assert!((c.gap - p.objective(&p.initial_point()).unwrap()).abs() < 1e-12);
    }
}
