//! Multithreaded engines.
//!
//! `run_param_server` keeps one master thread as the only writer of x. It
//! publishes immutable versioned snapshots; workers pull the latest one,
//! compute a sample gradient and push it back tagged with the version they
//! read. `run_lockfree_shared` keeps x in a shared array of atomics and lets
//! every worker read it coordinate by coordinate with no coordination, so a
//! read may mix values from different iterations.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::thread;
use std::time::Instant;

use crossbeam_channel::bounded;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Mode, RunConfig};
use crate::param::{add_assign, ParamVector};
use crate::problems::{Problem, ProblemError};
use crate::rng::{derive_stream, Purpose};
use crate::theory::{resolve_gamma, TheoryError};
use crate::trace::{Trace, TraceMeta, TraceRow};

#[derive(Debug, Error)]
pub enum ParallelError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("cannot resolve the steplength: {0}")]
    Theory(#[from] TheoryError),
    #[error("expected mode {expected}, got {got}")]
    WrongMode {
        expected: &'static str,
        got: &'static str,
    },
    #[error("corrupt delay log: applied at version {applied} before being read at {pulled}")]
    CorruptLog { pulled: u64, applied: u64 },
    #[error("iteration count {0} does not fit the shared counter")]
    CounterOverflow(usize),
    #[error("run failed after {} checkpoints: {reason}", partial.len())]
    RunFailed { reason: String, partial: Box<Trace> },
}

/// One applied gradient contribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayRecord {
    pub worker: usize,
    /// Version (number of applied updates) of the x the gradient was computed at.
    pub pulled: u64,
    /// Version the contribution was applied to.
    pub applied: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub max_observed: u64,
    pub histogram: BTreeMap<u64, u64>,
    pub per_worker_mean: BTreeMap<usize, f64>,
}

impl DelayStats {
    pub fn total(&self) -> u64 {
        self.histogram.values().sum()
    }
}

/// Histogram, maximum and per-worker mean of `applied − pulled`.
pub fn delay_stats(records: &[DelayRecord]) -> Result<DelayStats, ParallelError> {
    let mut stats = DelayStats::default();
    let mut sums: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for r in records {
        if r.applied < r.pulled {
            return Err(ParallelError::CorruptLog {
                pulled: r.pulled,
                applied: r.applied,
            });
        }
        let d = r.applied - r.pulled;
        stats.max_observed = stats.max_observed.max(d);
        *stats.histogram.entry(d).or_default() += 1;
        let e = sums.entry(r.worker).or_default();
        e.0 += d;
        e.1 += 1;
    }
    stats.per_worker_mean = sums
        .into_iter()
        .map(|(w, (s, c))| (w, s as f64 / c as f64))
        .collect();
    Ok(stats)
}

/// Shared parameter vector with indivisible per-coordinate updates.
///
/// Values are stored as `f64` bit patterns. Loads and the compare-and-swap
/// add are relaxed: per-location coherence is all the algorithm asks for,
/// and every completed write is eventually visible to every reader.
#[derive(Debug)]
pub struct SharedParams {
    cells: Vec<AtomicU64>,
}

impl SharedParams {
    pub fn new(values: &[f64]) -> Self {
        SharedParams {
            cells: values.iter().map(|v| AtomicU64::new(v.to_bits())).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn load(&self, i: usize) -> f64 {
        f64::from_bits(self.cells[i].load(Ordering::Relaxed))
    }

    /// `x[i] -= dec` as one indivisible read-modify-write; returns the old value.
    pub fn sub(&self, i: usize, dec: f64) -> f64 {
        let old = self.cells[i]
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
                Some((f64::from_bits(bits) - dec).to_bits())
            })
            .expect("closure always succeeds");
        f64::from_bits(old)
    }

    /// `x[i] += inc` as one indivisible read-modify-write.
    pub fn add(&self, i: usize, inc: f64) -> f64 {
        let old = self.cells[i]
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |bits| {
                Some((f64::from_bits(bits) + inc).to_bits())
            })
            .expect("closure always succeeds");
        f64::from_bits(old)
    }

    /// Coordinate-wise copy with no whole-vector guarantee.
    pub fn read_into(&self, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.cells) {
            *o = f64::from_bits(c.load(Ordering::Relaxed));
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.read_into(&mut v);
        v
    }
}

/// One coordinate write of a lock-free run, for replay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WriteLog {
    pub k: u64,
    pub worker: usize,
    pub coordinate: usize,
    pub samples: Vec<usize>,
    /// γ·Σ_m G_i, subtracted from coordinate i.
    pub decrement: f64,
}

#[derive(Clone, Debug)]
pub struct ThreadedRun {
    pub trace: Trace,
    pub delays: DelayStats,
    pub final_x: ParamVector,
    /// Updates (param server) or coordinate writes (lock-free) per worker.
    pub writes_per_worker: Vec<u64>,
    /// Sample gradients the master applied (param server only).
    pub contributions_applied: u64,
    pub log: Option<Vec<WriteLog>>,
}

struct Snapshot {
    k: u64,
    t: f64,
    x: Arc<Vec<f64>>,
    max_delay: u64,
}

fn evaluate<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    gamma: f64,
    mut snaps: Vec<Snapshot>,
    skipped: u64,
) -> Result<Trace, ProblemError> {
    snaps.sort_by_key(|s| s.k);
    let mut rows = Vec::with_capacity(snaps.len());
    // Lock-free snapshots are stamped by whichever worker drew the ticket, so
    // a later index can carry an earlier stamp; report the latest time seen.
    let mut t = 0.0f64;
    let mut max_delay = 0;
    for s in snaps {
        let c = p.checkpoint(&s.x)?;
        t = t.max(s.t);
        max_delay = max_delay.max(s.max_delay);
        rows.push(TraceRow {
            k: s.k,
            t,
            f: c.f,
            gradsq: c.gradsq,
            gamma,
            max_delay_observed: max_delay,
        });
    }
    Ok(Trace {
        rows,
        meta: TraceMeta {
            eval: p.eval_scope(),
            total_iterations: Some(cfg.iterations as u64),
            config_key: Some(cfg.key()),
            seed: Some(cfg.seeds.master_seed),
            skipped_updates: skipped,
        },
    })
}

fn prepare<P: Problem + ?Sized>(p: &P, cfg: &RunConfig, mode: Mode) -> Result<f64, ParallelError> {
    cfg.validate()?;
    if cfg.mode != mode {
        return Err(ParallelError::WrongMode {
            expected: mode.as_str(),
            got: cfg.mode.as_str(),
        });
    }
    if u64::try_from(cfg.iterations).is_err() || cfg.iterations == usize::MAX {
        return Err(ParallelError::CounterOverflow(cfg.iterations));
    }
    Ok(resolve_gamma(p, cfg)?)
}

fn panic_message(e: &(dyn std::any::Any + Send)) -> String {
    e.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

fn failed<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
    gamma: f64,
    snaps: Vec<Snapshot>,
    reason: String,
) -> ParallelError {
    let partial = evaluate(p, cfg, gamma, snaps, 0).unwrap_or_default();
    ParallelError::RunFailed {
        reason,
        partial: Box::new(partial),
    }
}

struct Contribution {
    worker: usize,
    version: u64,
    grad: Vec<f64>,
}

/// Consistent-read engine: a master thread aggregates exactly M sample
/// gradients per update and is the only writer of x.
pub fn run_param_server<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
) -> Result<ThreadedRun, ParallelError> {
    let gamma = prepare(p, cfg, Mode::ConThreads)?;
    let n = p.dim();
    let k_total = cfg.iterations as u64;
    let start = Instant::now();
    let mut x = p.initial_point().into_vec();
    let published = RwLock::new((0u64, Arc::new(x.clone())));
    let stop = AtomicBool::new(false);
    let (tx, rx) = bounded::<Contribution>(0);

    let mut snaps = vec![Snapshot {
        k: 0,
        t: 0.0,
        x: published.read().expect("fresh lock").1.clone(),
        max_delay: 0,
    }];
    let mut records = Vec::with_capacity(cfg.iterations * cfg.minibatch);
    let mut per_worker = vec![0u64; cfg.workers];
    let mut applied = 0u64;
    let mut failure: Option<String> = None;

    thread::scope(|scope| {
        let mut handles = Vec::with_capacity(cfg.workers);
        for w in 0..cfg.workers {
            let tx = tx.clone();
            let published = &published;
            let stop = &stop;
            handles.push(scope.spawn(move || -> Result<(), ProblemError> {
                let mut rng = derive_stream(cfg.seeds, w as u64, Purpose::Sample);
                while !stop.load(Ordering::Relaxed) {
                    let (version, snap) = {
                        let guard = published
                            .read()
                            .expect("master never panics holding the lock");
                        (guard.0, guard.1.clone())
                    };
                    let xi = rng.random_range(0..p.sample_count());
                    let mut grad = vec![0.0; n];
                    p.stochastic_gradient_into(&snap, xi, &mut grad)?;
                    let c = Contribution {
                        worker: w,
                        version,
                        grad,
                    };
                    if tx.send(c).is_err() {
                        break;
                    }
                }
                Ok(())
            }));
        }
        drop(tx);

        let mut sum = vec![0.0; n];
        let mut max_delay = 0u64;
        'updates: for k in 0..k_total {
            sum.fill(0.0);
            let mut received = 0;
            while received < cfg.minibatch {
                let Ok(c) = rx.recv() else {
                    failure = Some(format!("all workers stopped before update {k}"));
                    break 'updates;
                };
                let delay = k - c.version;
                max_delay = max_delay.max(delay);
                records.push(DelayRecord {
                    worker: c.worker,
                    pulled: c.version,
                    applied: k,
                });
                per_worker[c.worker] += 1;
                add_assign(&mut sum, &c.grad);
                received += 1;
            }
            applied += received as u64;
            for (xc, s) in x.iter_mut().zip(&sum) {
                *xc -= gamma * s;
            }
            let next = Arc::new(x.clone());
            *published
                .write()
                .expect("workers never panic holding the lock") = (k + 1, next.clone());
            if cfg.is_checkpoint((k + 1) as usize) {
                snaps.push(Snapshot {
                    k: k + 1,
                    t: start.elapsed().as_secs_f64(),
                    x: next,
                    max_delay,
                });
            }
        }
        stop.store(true, Ordering::Relaxed);
        drop(rx);
        for h in handles {
            match h.join() {
                Ok(Ok(())) => {}
                Ok(Err(e)) => failure = failure.take().or(Some(e.to_string())),
                Err(e) => failure = failure.take().or(Some(panic_message(&*e))),
            }
        }
    });

    if let Some(reason) = failure {
        return Err(failed(p, cfg, gamma, snaps, reason));
    }
    let delays = delay_stats(&records)?;
    let trace = evaluate(p, cfg, gamma, snaps, 0)?;
    Ok(ThreadedRun {
        trace,
        delays,
        final_x: ParamVector::from_vec(x),
        writes_per_worker: per_worker,
        contributions_applied: applied,
        log: None,
    })
}

struct WorkerResult {
    worker: usize,
    writes: u64,
    records: Vec<DelayRecord>,
    snaps: Vec<Snapshot>,
    log: Vec<WriteLog>,
}

/// Inconsistent-read engine: lock-free single-coordinate writes to shared
/// atomics; a shared ticket counter hands out exactly K iteration indices.
pub fn run_lockfree_shared<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
) -> Result<ThreadedRun, ParallelError> {
    let gamma = prepare(p, cfg, Mode::InconThreads)?;
    let n = p.dim();
    let k_total = cfg.iterations as u64;
    let x1 = p.initial_point();
    let shared = SharedParams::new(&x1);
    let tickets = AtomicU64::new(0);
    let completed = AtomicU64::new(0);
    let max_delay = AtomicU64::new(0);
    let start = Instant::now();

    let first = Snapshot {
        k: 0,
        t: 0.0,
        x: Arc::new(x1.into_vec()),
        max_delay: 0,
    };
    let outcomes: Mutex<Vec<Result<WorkerResult, String>>> = Mutex::new(Vec::new());

    thread::scope(|scope| {
        for w in 0..cfg.workers {
            let (shared, tickets, completed, max_delay, outcomes) =
                (&shared, &tickets, &completed, &max_delay, &outcomes);
            scope.spawn(move || {
                let run = || -> Result<WorkerResult, ProblemError> {
                    let mut samples_rng = derive_stream(cfg.seeds, w as u64, Purpose::Sample);
                    let mut coord_rng = derive_stream(cfg.seeds, w as u64, Purpose::Coordinate);
                    let mut out = WorkerResult {
                        worker: w,
                        writes: 0,
                        records: Vec::new(),
                        snaps: Vec::new(),
                        log: Vec::new(),
                    };
                    let mut xhat = vec![0.0; n];
                    let mut samples = vec![0usize; cfg.minibatch];
                    loop {
                        if tickets.load(Ordering::Relaxed) >= k_total {
                            break;
                        }
                        let seen = completed.load(Ordering::Relaxed);
                        shared.read_into(&mut xhat);
                        for s in samples.iter_mut() {
                            *s = samples_rng.random_range(0..p.sample_count());
                        }
                        let i = coord_rng.random_range(0..n);
                        let mut partial = 0.0;
                        for &xi in &samples {
                            partial += p.stochastic_partial(&xhat, xi, i)?;
                        }
                        let k = tickets.fetch_add(1, Ordering::Relaxed);
                        if k >= k_total {
                            break;
                        }
                        let dec = gamma * partial;
                        shared.sub(i, dec);
                        let delay = k - seen.min(k);
                        max_delay.fetch_max(delay, Ordering::Relaxed);
                        out.writes += 1;
                        out.records.push(DelayRecord {
                            worker: w,
                            pulled: seen.min(k),
                            applied: k,
                        });
                        if cfg.record_log {
                            out.log.push(WriteLog {
                                k,
                                worker: w,
                                coordinate: i,
                                samples: samples.clone(),
                                decrement: dec,
                            });
                        }
                        if cfg.is_checkpoint((k + 1) as usize) && k + 1 < k_total {
                            // Torn by design: other writers may land mid-copy.
                            out.snaps.push(Snapshot {
                                k: k + 1,
                                t: start.elapsed().as_secs_f64(),
                                x: Arc::new(shared.to_vec()),
                                max_delay: max_delay.load(Ordering::Relaxed),
                            });
                        }
                        completed.fetch_add(1, Ordering::Relaxed);
                    }
                    Ok(out)
                };
                let result = run().map_err(|e| e.to_string());
                outcomes
                    .lock()
                    .expect("no panics while holding")
                    .push(result);
            });
        }
    });
    let elapsed = start.elapsed().as_secs_f64();

    let mut snaps = vec![first];
    let mut records = Vec::new();
    let mut per_worker = vec![0u64; cfg.workers];
    let mut log = Vec::new();
    let mut failure = None;
    let results = outcomes.into_inner().expect("workers finished");
    if results.len() < cfg.workers {
        failure = Some("worker panicked".to_string());
    }
    for r in results {
        match r {
            Ok(wr) => {
                per_worker[wr.worker] = wr.writes;
                records.extend(wr.records);
                snaps.extend(wr.snaps);
                log.extend(wr.log);
            }
            Err(e) => failure = failure.or(Some(e)),
        }
    }
    let final_x = shared.to_vec();
    snaps.push(Snapshot {
        k: k_total,
        t: elapsed,
        x: Arc::new(final_x.clone()),
        max_delay: max_delay.load(Ordering::Relaxed),
    });
    if let Some(reason) = failure {
        snaps.pop();
        return Err(failed(p, cfg, gamma, snaps, reason));
    }
    records.sort_by_key(|r| r.applied);
    log.sort_by_key(|l| l.k);
    let delays = delay_stats(&records)?;
    let trace = evaluate(p, cfg, gamma, snaps, 0)?;
    Ok(ThreadedRun {
        trace,
        delays,
        final_x: ParamVector::from_vec(final_x),
        writes_per_worker: per_worker,
        contributions_applied: records.len() as u64 * cfg.minibatch as u64,
        log: cfg.record_log.then_some(log),
    })
}

/// Dispatch on `cfg.mode` for the threaded modes.
pub fn run_threaded<P: Problem + ?Sized>(
    p: &P,
    cfg: &RunConfig,
) -> Result<ThreadedRun, ParallelError> {
    match cfg.mode {
        Mode::ConThreads => run_param_server(p, cfg),
        Mode::InconThreads => run_lockfree_shared(p, cfg),
        other => Err(ParallelError::WrongMode {
            expected: "a threaded mode",
            got: other.as_str(),
        }),
    }
}
