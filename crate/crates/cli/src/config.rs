//! Run configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use asysg_core::problems::{
    make_synthetic_mlp, LeastSquares, MlpSpec, NoisyQuadratic, NoisyQuadraticSpec,
};
use asysg_core::{DelayModel, GammaRule, Mode, Problem, ReadModel, RunConfig, SeedSpec};
use serde::Deserialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemSection,
    pub algorithm: AlgorithmSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub seeds: SeedsSection,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hessian {
    #[default]
    Random,
    Identity,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSection {
    Quadratic {
        n: usize,
        #[serde(default)]
        hessian: Hessian,
        #[serde(default = "default_eig_min")]
        eig_min: f64,
        #[serde(default = "one_f64")]
        eig_max: f64,
        sigma: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        /// Explicit starting point; otherwise a random direction of norm `x1_norm`.
        #[serde(default)]
        x1: Option<Vec<f64>>,
        #[serde(default = "one_f64")]
        x1_norm: f64,
        #[serde(default)]
        seed: u64,
    },
    LeastSquares {
        n: usize,
        samples: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Mlp {
        #[serde(default)]
        widths: Option<Vec<usize>>,
        #[serde(default)]
        samples: Option<usize>,
        #[serde(default)]
        noise_std: Option<f64>,
        #[serde(default)]
        eval_samples: Option<usize>,
        #[serde(default)]
        full_eval_max: Option<usize>,
        #[serde(default)]
        seed: u64,
    },
}

fn default_eig_min() -> f64 {
    0.1
}
fn one_f64() -> f64 {
    1.0
}
fn one() -> usize {
    1
}
fn default_samples() -> usize {
    16
}
fn default_noise() -> f64 {
    0.1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSection {
    pub mode: Mode,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M", default = "one")]
    pub m: usize,
    #[serde(rename = "T", default)]
    pub t: usize,
    pub gamma: GammaRule,
    #[serde(default = "one")]
    pub workers: usize,
    /// Defaults to uniform delays in `0..=T`.
    #[serde(default)]
    pub delay_model: Option<DelayModel>,
    /// Defaults to the prefix model with τ = T.
    #[serde(default)]
    pub read_model: Option<ReadModel>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_trace")]
    pub trace: PathBuf,
    #[serde(default = "one")]
    pub checkpoint_every: usize,
    #[serde(default)]
    pub plot_data: bool,
    /// Keep the per-write log of lock-free runs.
    #[serde(default)]
    pub record_log: bool,
}

fn default_trace() -> PathBuf {
    PathBuf::from("trace.csv")
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            trace: default_trace(),
            checkpoint_every: 1,
            plot_data: false,
            record_log: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedsSection {
    #[serde(default)]
    pub master_seed: u64,
    /// Replicates run with master seeds `master_seed, master_seed + 1, …`.
    #[serde(default = "one")]
    pub count: usize,
}

impl Default for SeedsSection {
    fn default() -> Self {
        SeedsSection {
            master_seed: 0,
            count: 1,
        }
    }
}

/// Set `section.key=value` in a JSON document. The value is parsed as JSON
/// when it can be, and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), CliError> {
    let bad = || CliError::Override(assignment.to_string());
    let (path, raw) = assignment.split_once('=').ok_or_else(bad)?;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad());
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    for key in &keys[..keys.len() - 1] {
        let obj = node.as_object_mut().ok_or_else(bad)?;
        node = obj
            .entry(key.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = node.as_object_mut().ok_or_else(bad)?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

pub fn load(path: &Path, overrides: &[String]) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Syntax {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    parse(doc)
}

pub fn parse(doc: Value) -> Result<ConfigFile, CliError> {
    let cfg: ConfigFile = serde_path_to_error::deserialize(doc).map_err(|e| {
        let field = e.path().to_string();
        CliError::invalid(field, e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl ConfigFile {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.count < 1 {
            return Err(CliError::invalid("seeds.count", "must be at least 1"));
        }
        self.run_config(self.seeds.master_seed)
            .validate()
            .map_err(|e| CliError::invalid(e.field, e.message))
    }

    pub fn run_config(&self, master_seed: u64) -> RunConfig {
        let a = &self.algorithm;
        RunConfig {
            mode: a.mode,
            iterations: a.k,
            minibatch: a.m,
            gamma: a.gamma,
            delay_bound: a.t,
            workers: a.workers,
            delay_model: a.delay_model.unwrap_or(DelayModel::Uniform),
            read_model: a.read_model.unwrap_or(ReadModel::Prefix { tau: a.t }),
            checkpoint_every: self.output.checkpoint_every,
            seeds: SeedSpec::new(master_seed),
            record_log: self.output.record_log,
        }
    }

    pub fn replicate_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.seeds.count as u64).map(|i| self.seeds.master_seed.wrapping_add(i))
    }

    pub fn build_problem(&self) -> Result<Box<dyn Problem>, CliError> {
        let invalid = |e: asysg_core::ProblemError| CliError::invalid("problem", e);
        match &self.problem {
            ProblemSection::Quadratic {
                n,
                hessian,
                eig_min,
                eig_max,
                sigma,
                samples,
                x1,
                x1_norm,
                seed,
            } => {
                if *n == 0 {
                    return Err(CliError::invalid("problem.n", "must be at least 1"));
                }
                let mut spec = match hessian {
                    Hessian::Random => NoisyQuadraticSpec::random(
                        *n, *eig_min, *eig_max, *sigma, *samples, *x1_norm, *seed,
                    ),
                    Hessian::Identity => {
                        let start = vec![*x1_norm / (*n as f64).sqrt(); *n];
                        NoisyQuadraticSpec::identity(*n, *sigma, *samples, start)
                    }
                };
                if let Some(x1) = x1 {
                    spec.x1 = x1.clone();
                }
                Ok(Box::new(NoisyQuadratic::new(spec, *seed).map_err(invalid)?))
            }
            ProblemSection::LeastSquares {
                n,
                samples,
                noise,
                seed,
            } => Ok(Box::new(
                LeastSquares::random(*n, *samples, *noise, *seed).map_err(invalid)?,
            )),
            ProblemSection::Mlp {
                widths,
                samples,
                noise_std,
                eval_samples,
                full_eval_max,
                seed,
            } => {
                let d = MlpSpec::default();
                let spec = MlpSpec {
                    widths: widths.clone().unwrap_or(d.widths),
                    samples: samples.unwrap_or(d.samples),
                    noise_std: noise_std.unwrap_or(d.noise_std),
                    eval_samples: eval_samples.unwrap_or(d.eval_samples),
                    full_eval_max: full_eval_max.unwrap_or(d.full_eval_max),
                };
                Ok(Box::new(make_synthetic_mlp(spec, *seed).map_err(invalid)?))
            }
        }
    }

    /// Where replicate `seed` writes its trace.
    pub fn trace_path(&self, seed: u64) -> PathBuf {
        if self.seeds.count == 1 {
            return self.output.trace.clone();
        }
        let t = &self.output.trace;
        let stem = t.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
        let ext = t.extension().and_then(|s| s.to_str()).unwrap_or("csv");
        t.with_file_name(format!("{stem}.seed{seed}.{ext}"))
    }
}
