use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeedSpec;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Serial,
    ConSim,
    InconSim,
    InconSparseSim,
    ConThreads,
    InconThreads,
}

impl Mode {
    pub fn is_sim(self) -> bool {
        !self.is_threaded()
    }

    pub fn is_threaded(self) -> bool {
        matches!(self, Mode::ConThreads | Mode::InconThreads)
    }

    /// Consistent-read family (serial SG is its zero-delay special case).
    pub fn is_consistent(self) -> bool {
        matches!(self, Mode::Serial | Mode::ConSim | Mode::ConThreads)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Serial => "serial",
            Mode::ConSim => "con-sim",
            Mode::InconSim => "incon-sim",
            Mode::InconSparseSim => "incon-sparse-sim",
            Mode::ConThreads => "con-threads",
            Mode::InconThreads => "incon-threads",
        }
    }
}

/// Steplength rule. The corollary rules are resolved against the problem
/// constants when a run starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum GammaRule {
    Constant { value: f64 },
    Corollary2,
    Corollary4,
}

/// How the consistent-read simulator picks τ_{k,m}.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayModel {
    /// Every gradient is exactly `tau` updates old.
    Fixed { tau: usize },
    /// τ drawn uniformly from `0..=T`.
    Uniform,
    /// τ sweeps `0, 1, …, T, 0, 1, …` over the flattened `(k, m)` sequence.
    Cyclic,
}

/// How the inconsistent-read simulator picks the missing-update set J(k, m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ReadModel {
    /// J = {k−1, …, k−τ} (clamped at 0).
    Prefix { tau: usize },
    /// Each j in {k−T, …, k−1} is missing independently with probability `p`.
    RandomSubset { p: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    /// Total iterations K (master updates, or coordinate writes in incon modes).
    pub iterations: usize,
    /// Minibatch size M.
    pub minibatch: usize,
    pub gamma: GammaRule,
    /// Delay bound T.
    pub delay_bound: usize,
    pub workers: usize,
    pub delay_model: DelayModel,
    pub read_model: ReadModel,
    pub checkpoint_every: usize,
    pub seeds: SeedSpec,
    /// Keep the per-iteration choice log in threaded incon runs (for replay).
    #[serde(default)]
    pub record_log: bool,
}

impl RunConfig {
    /// A serial configuration; the other fields take their neutral values.
    pub fn serial(iterations: usize, minibatch: usize, gamma: f64, seed: u64) -> Self {
        RunConfig {
            mode: Mode::Serial,
            iterations,
            minibatch,
            gamma: GammaRule::Constant { value: gamma },
            delay_bound: 0,
            workers: 1,
            delay_model: DelayModel::Fixed { tau: 0 },
            read_model: ReadModel::Prefix { tau: 0 },
            checkpoint_every: 1,
            seeds: SeedSpec::new(seed),
            record_log: false,
        }
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_delay_bound(mut self, delay_bound: usize) -> Self {
        self.delay_bound = delay_bound;
        self
    }

    pub fn with_delay_model(mut self, model: DelayModel) -> Self {
        self.delay_model = model;
        self
    }

    pub fn with_read_model(mut self, model: ReadModel) -> Self {
        self.read_model = model;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_checkpoint_every(mut self, every: usize) -> Self {
        self.checkpoint_every = every;
        self
    }

    pub fn with_gamma(mut self, gamma: GammaRule) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = SeedSpec::new(seed);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.iterations < 1 {
            return Err(ConfigError::new("algorithm.K", "must be at least 1"));
        }
        if self.minibatch < 1 {
            return Err(ConfigError::new("algorithm.M", "must be at least 1"));
        }
        if self.workers < 1 {
            return Err(ConfigError::new("algorithm.workers", "must be at least 1"));
        }
        if self.mode.is_sim() && self.workers != 1 {
            return Err(ConfigError::new(
                "algorithm.workers",
                format!(
                    "simulated mode {} requires exactly 1 worker",
                    self.mode.as_str()
                ),
            ));
        }
        if self.checkpoint_every < 1 {
            return Err(ConfigError::new(
                "output.checkpoint_every",
                "must be at least 1",
            ));
        }
        if let GammaRule::Constant { value } = self.gamma {
            if !value.is_finite() || value < 0.0 {
                return Err(ConfigError::new(
                    "algorithm.gamma.value",
                    "must be finite and nonnegative",
                ));
            }
        }
        if let DelayModel::Fixed { tau } = self.delay_model {
            if tau > self.delay_bound {
                return Err(ConfigError::new(
                    "algorithm.delay_model.tau",
                    format!("tau = {tau} exceeds T = {}", self.delay_bound),
                ));
            }
        }
        match self.read_model {
            ReadModel::Prefix { tau } if tau > self.delay_bound => {
                return Err(ConfigError::new(
                    "algorithm.read_model.tau",
                    format!("tau = {tau} exceeds T = {}", self.delay_bound),
                ));
            }
            ReadModel::RandomSubset { p } if !(0.0..=1.0).contains(&p) => {
                return Err(ConfigError::new(
                    "algorithm.read_model.p",
                    "must lie in [0, 1]",
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Checkpointed iteration indices: 0, c, 2c, … and always K.
    pub fn checkpoints(&self) -> impl Iterator<Item = usize> + '_ {
        let k = self.iterations;
        let c = self.checkpoint_every.max(1);
        (0..=k).filter(move |&i| i % c == 0 || i == k)
    }

    /// Identifies the configuration up to its seed; traces that share a key
    /// are replicates of one experiment.
    pub fn key(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(fields) = value.as_object_mut() {
            fields.remove("seeds");
            fields.remove("record_log");
        }
        value.to_string()
    }

    pub fn is_checkpoint(&self, k: usize) -> bool {
        k.is_multiple_of(self.checkpoint_every.max(1)) || k == self.iterations
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn serial_default_is_valid() {
        RunConfig::serial(10, 2, 0.1, 1).validate().unwrap();
    }

    #[test]
    fn sim_modes_need_one_worker() {
        let cfg = RunConfig::serial(10, 1, 0.1, 1)
            .with_mode(Mode::ConSim)
            .with_workers(2);
        assert_eq!(cfg.validate().unwrap_err().field, "algorithm.workers");
        let threaded = cfg.with_mode(Mode::ConThreads);
        threaded.validate().unwrap();
    }

    #[test]
    fn tau_above_bound_rejected() {
        let cfg = RunConfig::serial(10, 1, 0.1, 1)
            .with_mode(Mode::ConSim)
            .with_delay_bound(2)
            .with_delay_model(DelayModel::Fixed { tau: 3 });
        assert_eq!(
            cfg.validate().unwrap_err().field,
            "algorithm.delay_model.tau"
        );
        let cfg = RunConfig::serial(10, 1, 0.1, 1)
            .with_mode(Mode::InconSim)
            .with_delay_bound(1)
            .with_read_model(ReadModel::Prefix { tau: 2 });
        assert_eq!(
            cfg.validate().unwrap_err().field,
            "algorithm.read_model.tau"
        );
    }

    #[test]
    fn zero_counts_rejected() {
        let mut cfg = RunConfig::serial(0, 1, 0.1, 1);
        assert_eq!(cfg.validate().unwrap_err().field, "algorithm.K");
        cfg.iterations = 5;
        cfg.minibatch = 0;
        assert_eq!(cfg.validate().unwrap_err().field, "algorithm.M");
    }

    #[test]
    fn checkpoint_schedule_includes_final() {
        let cfg = RunConfig::serial(10, 1, 0.1, 1).with_checkpoint_every(4);
        assert_eq!(cfg.checkpoints().collect::<Vec<_>>(), vec![0, 4, 8, 10]);
        let cfg = RunConfig::serial(10, 1, 0.1, 1).with_checkpoint_every(5);
        assert_eq!(cfg.checkpoints().collect::<Vec<_>>(), vec![0, 5, 10]);
    }

    #[test]
    fn modes_round_trip_through_json() {
        let cfg = RunConfig::serial(10, 1, 0.1, 1)
            .with_mode(Mode::InconSparseSim)
            .with_read_model(ReadModel::RandomSubset { p: 0.25 });
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"incon-sparse-sim\""));
        assert!(text.contains("\"random-subset\""));
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
