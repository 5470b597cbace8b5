//! Single-threaded simulators of the asynchronous updates.
//!
//! Asynchrony is injected explicitly: the consistent-read simulator draws a
//! delay τ for every minibatch element and evaluates the gradient at the true
//! past iterate x_{k−τ}; the inconsistent-read simulator draws a set J of
//! recent updates the reader missed and evaluates at x_k minus those
//! single-coordinate deltas. Every random choice comes from a
//! [`ChoiceSource`], so runs are bit-reproducible and can be scripted.

use rand::Rng;
use thiserror::Error;

use crate::config::{ConfigError, DelayModel, Mode, ReadModel, RunConfig};
use crate::history::{HistoryError, HistoryRing};
use crate::param::{add_assign, ParamVector};
use crate::problems::{Problem, ProblemError};
use crate::rng::{derive_stream, Purpose, Stream};
use crate::theory::{resolve_gamma, TheoryError};
use crate::trace::{Trace, TraceMeta, TraceRow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("cannot resolve the steplength: {0}")]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("expected mode {expected}, got {got}")]
    WrongMode {
        expected: &'static str,
        got: &'static str,
    },
    #[error("delay {tau} at iteration {k}, element {m} exceeds the bound T = {bound}")]
    DelayOutOfBound {
        k: usize,
        m: usize,
        tau: usize,
        bound: usize,
    },
    #[error(
        "read set at iteration {k}, element {m} names update {j}, outside [k − {bound}, k − 1]"
    )]
    ReadOutOfWindow {
        k: usize,
        m: usize,
        j: usize,
        bound: usize,
    },
    #[error("iterate became non-finite at iteration {k}")]
    Diverged { k: usize },
}

/// Source of every random decision a simulated run makes.
pub trait ChoiceSource {
    /// Sample index ξ_{k,m} in `0..count`.
    fn sample(&mut self, k: usize, m: usize, count: usize) -> usize;
    /// Coordinate i_k in `0..dim`.
    fn coordinate(&mut self, k: usize, dim: usize) -> usize;
    /// Position in supp(g_k), in `0..len`, for the sparse rule.
    fn support_position(&mut self, k: usize, len: usize) -> usize;
    /// Requested delay τ_{k,m}, before warm-up clamping.
    fn delay(&mut self, k: usize, m: usize) -> usize;
    /// The missed-update set J(k, m), written into `out`.
    fn read_set(&mut self, k: usize, m: usize, out: &mut Vec<usize>);
}

/// Draws from the configured models using the run's seeded streams.
#[derive(Clone, Debug)]
pub struct RandomChoices {
    samples: Stream,
    coordinates: Stream,
    delays: Stream,
    reads: Stream,
    delay_model: DelayModel,
    read_model: ReadModel,
    bound: usize,
    minibatch: usize,
}

impl RandomChoices {
    pub fn new(cfg: &RunConfig) -> Self {
        let s = cfg.seeds;
        RandomChoices {
            samples: derive_stream(s, 0, Purpose::Sample),
            coordinates: derive_stream(s, 0, Purpose::Coordinate),
            delays: derive_stream(s, 0, Purpose::Delay),
            reads: derive_stream(s, 0, Purpose::Read),
            delay_model: cfg.delay_model,
            read_model: cfg.read_model,
            bound: cfg.delay_bound,
            minibatch: cfg.minibatch,
        }
    }
}

impl ChoiceSource for RandomChoices {
    fn sample(&mut self, _k: usize, _m: usize, count: usize) -> usize {
        self.samples.random_range(0..count)
    }

    fn coordinate(&mut self, _k: usize, dim: usize) -> usize {
        self.coordinates.random_range(0..dim)
    }

    fn support_position(&mut self, _k: usize, len: usize) -> usize {
        self.coordinates.random_range(0..len)
    }

    fn delay(&mut self, k: usize, m: usize) -> usize {
        match self.delay_model {
            DelayModel::Fixed { tau } => tau,
            DelayModel::Uniform => self.delays.random_range(0..=self.bound),
            DelayModel::Cyclic => (k * self.minibatch + m) % (self.bound + 1),
        }
    }

    fn read_set(&mut self, k: usize, _m: usize, out: &mut Vec<usize>) {
        out.clear();
        match self.read_model {
            ReadModel::Prefix { tau } => out.extend(k.saturating_sub(tau)..k),
            ReadModel::RandomSubset { p } => {
                for j in k.saturating_sub(self.bound)..k {
                    if self.reads.random_bool(p) {
                        out.push(j);
                    }
                }
            }
        }
    }
}

/// Replays fixed decisions. Sample and coordinate entries are indexed by
/// `k·M + m` and `k`; delays default to 0 and read sets to empty.
#[derive(Clone, Debug, Default)]
pub struct ScriptedChoices {
    pub minibatch: usize,
    pub samples: Vec<usize>,
    pub coordinates: Vec<usize>,
    pub support_positions: Vec<usize>,
    pub delays: Vec<usize>,
    pub reads: Vec<Vec<usize>>,
}

impl ChoiceSource for ScriptedChoices {
    fn sample(&mut self, k: usize, m: usize, _count: usize) -> usize {
        *self
            .samples
            .get(k * self.minibatch + m)
            .unwrap_or_else(|| panic!("no scripted sample for iteration {k}, element {m}"))
    }

    fn coordinate(&mut self, k: usize, _dim: usize) -> usize {
        *self
            .coordinates
            .get(k)
            .unwrap_or_else(|| panic!("no scripted coordinate for iteration {k}"))
    }

    fn support_position(&mut self, k: usize, _len: usize) -> usize {
        self.support_positions.get(k).copied().unwrap_or(0)
    }

    fn delay(&mut self, k: usize, m: usize) -> usize {
        self.delays
            .get(k * self.minibatch + m)
            .copied()
            .unwrap_or(0)
    }

    fn read_set(&mut self, k: usize, m: usize, out: &mut Vec<usize>) {
        out.clear();
        if let Some(j) = self.reads.get(k * self.minibatch + m) {
            out.extend_from_slice(j);
        }
    }
}

/// Hooks into a simulated run.
pub trait Observer {
    /// x_k at the start of iteration k, and x_K once the run ends.
    fn iterate(&mut self, _k: usize, _x: &[f64]) {}
    /// The point the gradient for `(k, m)` is evaluated at.
    fn read(&mut self, _k: usize, _m: usize, _x: &[f64]) {}
}

impl Observer for () {}

/// Records every iterate.
#[derive(Clone, Debug, Default)]
pub struct IterateLog {
    pub iterates: Vec<Vec<f64>>,
}

impl Observer for IterateLog {
    fn iterate(&mut self, _k: usize, x: &[f64]) {
        self.iterates.push(x.to_vec());
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOutcome {
    pub trace: Trace,
    pub final_x: ParamVector,
}

/// The sparse rule: pick i from supp(g) and step by γ·‖g‖₀·g_i.
///
/// `pick` receives the support and returns the chosen coordinate. Returns
/// `(i, decrement)`, or `None` when g = 0 and there is nothing to pick.
pub fn sparse_update(
    g: &[f64],
    gamma: f64,
    pick: impl FnOnce(&[usize]) -> usize,
) -> Option<(usize, f64)> {
    let support: Vec<usize> = (0..g.len()).filter(|&i| g[i] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let i = pick(&support);
    debug_assert!(support.contains(&i));
    Some((i, gamma * support.len() as f64 * g[i]))
}

struct Recorder<'a, P: ?Sized> {
    problem: &'a P,
    cfg: &'a RunConfig,
    gamma: f64,
    rows: Vec<TraceRow>,
    max_delay: usize,
}

impl<'a, P: Problem + ?Sized> Recorder<'a, P> {
    fn at(&mut self, k: usize, x: &[f64]) -> Result<(), SimError> {
        if !self.cfg.is_checkpoint(k) {
            return Ok(());
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Diverged { k });
        }
        let c = self.problem.checkpoint(x)?;
        self.rows.push(TraceRow {
            k: k as u64,
            t: 0.0,
            f: c.f,
            gradsq: c.gradsq,
            gamma: self.gamma,
            max_delay_observed: self.max_delay as u64,
        });
        Ok(())
    }

    fn finish(self, skipped: u64) -> Trace {
        Trace {
            rows: self.rows,
            meta: TraceMeta {
                eval: self.problem.eval_scope(),
                total_iterations: Some(self.cfg.iterations as u64),
                config_key: Some(self.cfg.key()),
                seed: Some(self.cfg.seeds.master_seed),
                skipped_updates: skipped,
            },
        }
    }
}

/// Run any simulated mode with explicit choices and an observer.
pub fn simulate<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    choices: &mut dyn ChoiceSource,
    observer: &mut dyn Observer,
) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    if cfg.mode.is_threaded() {
        return Err(SimError::WrongMode {
            expected: "a simulated mode",
            got: cfg.mode.as_str(),
        });
    }
    let gamma = resolve_gamma(p, cfg)?;
    let rec = Recorder {
        problem: p,
        cfg,
        gamma,
        rows: Vec::new(),
        max_delay: 0,
    };
    match cfg.mode {
        Mode::Serial | Mode::ConSim => consistent(p, cfg, rec, choices, observer),
        Mode::InconSim => inconsistent(p, cfg, rec, choices, observer, false),
        Mode::InconSparseSim => inconsistent(p, cfg, rec, choices, observer, true),
        Mode::ConThreads | Mode::InconThreads => unreachable!("rejected above"),
    }
}

/// Serial SG, and the consistent-read simulator when `cfg.mode` is con-sim.
fn consistent<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    mut rec: Recorder<'_, P>,
    choices: &mut dyn ChoiceSource,
    observer: &mut dyn Observer,
) -> Result<SimOutcome, SimError> {
    let n = p.dim();
    let delayed = cfg.mode == Mode::ConSim;
    let bound = cfg.delay_bound;
    let gamma = rec.gamma;
    let mut x = p.initial_point();
    let mut g = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut ring: HistoryRing<Vec<f64>> = HistoryRing::new(if delayed { bound } else { 0 });

    for k in 0..cfg.iterations {
        observer.iterate(k, &x);
        rec.at(k, &x)?;
        if delayed {
            ring.push_with(k, || x.to_vec(), |slot| slot.copy_from_slice(&x))?;
        }
        sum.fill(0.0);
        for m in 0..cfg.minibatch {
            let xi = choices.sample(k, m, p.sample_count());
            let point: &[f64] = if delayed {
                let tau = choices.delay(k, m);
                if tau > bound {
                    return Err(SimError::DelayOutOfBound { k, m, tau, bound });
                }
                let tau = tau.min(k);
                rec.max_delay = rec.max_delay.max(tau);
                ring.get(k - tau, k)?
            } else {
                &x
            };
            observer.read(k, m, point);
            p.stochastic_gradient_into(point, xi, &mut g)?;
            add_assign(&mut sum, &g);
        }
        for (xc, s) in x.iter_mut().zip(&sum) {
            *xc -= gamma * s;
        }
    }
    observer.iterate(cfg.iterations, &x);
    rec.at(cfg.iterations, &x)?;
    Ok(SimOutcome {
        trace: rec.finish(0),
        final_x: x,
    })
}

/// x_{j+1} − x_j, which is nonzero in at most one coordinate.
#[derive(Clone, Copy, Debug)]
struct Delta {
    coord: usize,
    value: f64,
}

fn inconsistent<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    mut rec: Recorder<'_, P>,
    choices: &mut dyn ChoiceSource,
    observer: &mut dyn Observer,
    sparse: bool,
) -> Result<SimOutcome, SimError> {
    let n = p.dim();
    let bound = cfg.delay_bound;
    let gamma = rec.gamma;
    let mut x = p.initial_point();
    let mut xhat = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut missed = Vec::new();
    let mut ring: HistoryRing<Delta> = HistoryRing::new(bound);
    let mut skipped = 0u64;

    for k in 0..cfg.iterations {
        observer.iterate(k, &x);
        rec.at(k, &x)?;
        let coord = if sparse {
            None
        } else {
            let i = choices.coordinate(k, n);
            if i >= n {
                return Err(ProblemError::CoordinateOutOfRange { index: i, dim: n }.into());
            }
            Some(i)
        };
        let mut partial_sum = 0.0;
        sum.fill(0.0);
        for m in 0..cfg.minibatch {
            let xi = choices.sample(k, m, p.sample_count());
            choices.read_set(k, m, &mut missed);
            missed.sort_unstable();
            missed.dedup();
            for &j in &missed {
                if j >= k || j + bound < k {
                    return Err(SimError::ReadOutOfWindow { k, m, j, bound });
                }
            }
            let point: &[f64] = match missed.first() {
                None => &x,
                Some(&oldest) => {
                    rec.max_delay = rec.max_delay.max(k - oldest);
                    xhat.copy_from_slice(&x);
                    for &j in &missed {
                        let d = ring.get(j, k)?;
                        xhat[d.coord] -= d.value;
                    }
                    &xhat
                }
            };
            observer.read(k, m, point);
            match coord {
                Some(i) => partial_sum += p.stochastic_partial(point, xi, i)?,
                None => {
                    p.stochastic_gradient_into(point, xi, &mut g)?;
                    add_assign(&mut sum, &g);
                }
            }
        }

        let step = match coord {
            Some(i) => Some((i, gamma * partial_sum)),
            None => sparse_update(&sum, gamma, |support| {
                support[choices.support_position(k, support.len())]
            }),
        };
        let delta = match step {
            Some((i, dec)) => {
                let old = x[i];
                x[i] = old - dec;
                Delta {
                    coord: i,
                    value: x[i] - old,
                }
            }
            None => {
                skipped += 1;
                Delta {
                    coord: 0,
                    value: 0.0,
                }
            }
        };
        ring.push(k, delta)?;
    }
    observer.iterate(cfg.iterations, &x);
    rec.at(cfg.iterations, &x)?;
    Ok(SimOutcome {
        trace: rec.finish(skipped),
        final_x: x,
    })
}

fn require_mode(cfg: &RunConfig, mode: Mode) -> Result<(), SimError> {
    if cfg.mode == mode {
        Ok(())
    } else {
        Err(SimError::WrongMode {
            expected: mode.as_str(),
            got: cfg.mode.as_str(),
        })
    }
}

/// Any simulated mode, with choices drawn from the run's seeds.
pub fn run_sim<P: Problem + ?Sized>(p: &P, cfg: &RunConfig) -> Result<SimOutcome, SimError> {
    simulate(p, cfg, &mut RandomChoices::new(cfg), &mut ())
}

/// x_{k+1} = x_k − γ Σ_m G(x_k; ξ_{k,m}).
pub fn run_serial_sg<P: Problem + ?Sized>(p: &P, cfg: &RunConfig) -> Result<Trace, SimError> {
    require_mode(cfg, Mode::Serial)?;
    Ok(run_sim(p, cfg)?.trace)
}

/// x_{k+1} = x_k − γ Σ_m G(x_{k−τ_{k,m}}; ξ_{k,m}).
pub fn run_asysg_con_sim<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    delays: DelayModel,
) -> Result<Trace, SimError> {
    require_mode(cfg, Mode::ConSim)?;
    Ok(run_sim(p, &cfg.clone().with_delay_model(delays))?.trace)
}

/// Single-coordinate updates from gradients at reconstructed reads.
pub fn run_asysg_incon_sim<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    reads: ReadModel,
) -> Result<Trace, SimError> {
    require_mode(cfg, Mode::InconSim)?;
    Ok(run_sim(p, &cfg.clone().with_read_model(reads))?.trace)
}

/// Like `run_asysg_incon_sim`, with the coordinate drawn from supp(g_k).
pub fn run_asysg_incon_sparse_sim<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    reads: ReadModel,
) -> Result<Trace, SimError> {
    require_mode(cfg, Mode::InconSparseSim)?;
    Ok(run_sim(p, &cfg.clone().with_read_model(reads))?.trace)
}
