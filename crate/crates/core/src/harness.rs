//! Metrics over traces: ergodic averages, iterations to a target accuracy,
//! speedups, bound comparisons, and the trace CSV format.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::theory::TheoryReport;
use crate::trace::{EvalScope, Trace, TraceMeta, TraceRow};

pub const TRACE_HEADER: [&str; 6] = ["k", "t", "f", "gradsq", "gamma", "max_delay_observed"];

/// Empirical values may exceed a bound by this factor and still pass.
pub const BOUND_TOLERANCE: f64 = 1.25;

/// Reports averaging fewer seeds than this are flagged.
pub const LOW_SEED_COUNT: usize = 10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {values} values, {weights} weights")]
    LengthMismatch { values: usize, weights: usize },
    #[error("total weight must be positive")]
    ZeroWeight,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("traces come from different configurations")]
    ConfigMismatch,
    #[error("baseline never reaches the target {target}")]
    BaselineUnreached { target: f64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Σ γ_k·g_k / Σ γ_k.
pub fn ergodic_average(values: &[f64], weights: &[f64]) -> Result<f64, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Empty);
    }
    if values.len() != weights.len() {
        return Err(HarnessError::LengthMismatch {
            values: values.len(),
            weights: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(HarnessError::ZeroWeight);
    }
    let weighted = values
        .iter()
        .zip(weights)
        .fold(0.0, |acc, (v, w)| acc + v * w);
    Ok(weighted / total)
}

/// Ergodic average of gradsq over the rows the bounds cover (k < K).
pub fn trace_ergodic_average(trace: &Trace) -> Result<f64, HarnessError> {
    let rows = trace.bound_window();
    let g: Vec<f64> = rows.iter().map(|r| r.gradsq).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    ergodic_average(&g, &w)
}

/// min over k < K of gradsq.
pub fn trace_min_gradsq(trace: &Trace) -> Option<f64> {
    trace
        .bound_window()
        .iter()
        .map(|r| r.gradsq)
        .reduce(f64::min)
}

fn first_row(trace: &Trace, pred: impl Fn(&TraceRow) -> bool) -> Option<&TraceRow> {
    trace.rows.iter().find(|r| pred(r))
}

/// Smallest checkpointed k with gradsq ≤ `epsilon`.
pub fn iterations_to_target(trace: &Trace, epsilon: f64) -> Option<u64> {
    first_row(trace, |r| r.gradsq <= epsilon).map(|r| r.k)
}

/// Wall time of the first checkpoint with gradsq ≤ `epsilon`.
pub fn seconds_to_target(trace: &Trace, epsilon: f64) -> Option<f64> {
    first_row(trace, |r| r.gradsq <= epsilon).map(|r| r.t)
}

/// Smallest checkpointed k with objective ≤ `target`.
pub fn iterations_to_objective(trace: &Trace, target: f64) -> Option<u64> {
    first_row(trace, |r| r.f <= target).map(|r| r.k)
}

fn positive(name: &'static str, value: f64) -> Result<f64, HarnessError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(HarnessError::NonPositive { name, value })
    }
}

/// serial_iters / parallel_iters × workers.
pub fn iteration_speedup(
    serial_iters: u64,
    parallel_iters: u64,
    workers: usize,
) -> Result<f64, HarnessError> {
    let s = positive("serial iterations", serial_iters as f64)?;
    let p = positive("parallel iterations", parallel_iters as f64)?;
    let w = positive("workers", workers as f64)?;
    Ok(s / p * w)
}

pub fn time_speedup(serial_seconds: f64, parallel_seconds: f64) -> Result<f64, HarnessError> {
    let s = positive("serial seconds", serial_seconds)?;
    let p = positive("parallel seconds", parallel_seconds)?;
    Ok(s / p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub workers: usize,
    pub iteration_speedup: Option<f64>,
    /// Absent when either trace carries no wall time (simulated runs).
    pub time_speedup: Option<f64>,
    pub iterations_to_target: Option<u64>,
    pub seconds_to_target: Option<f64>,
}

/// Compare one parallel trace against the baseline at gradsq ≤ `epsilon`.
pub fn speedup_row(
    baseline: &Trace,
    parallel: &Trace,
    workers: usize,
    epsilon: f64,
) -> Result<SpeedupRow, HarnessError> {
    let base_k = iterations_to_target(baseline, epsilon)
        .ok_or(HarnessError::BaselineUnreached { target: epsilon })?;
    let base_t = seconds_to_target(baseline, epsilon).expect("same row as base_k");
    let k = iterations_to_target(parallel, epsilon);
    let t = seconds_to_target(parallel, epsilon);
    Ok(SpeedupRow {
        workers,
        iteration_speedup: k.and_then(|k| iteration_speedup(base_k, k, workers).ok()),
        time_speedup: t.and_then(|t| time_speedup(base_t, t).ok()),
        iterations_to_target: k,
        seconds_to_target: t,
    })
}

/// Which empirical quantity a bound is compared against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Empirical {
    MinGradsq,
    Ergodic,
}

/// The quantity each bound's left-hand side measures.
pub fn bound_metric(key: &str) -> Empirical {
    match key {
        "bound_eq8" | "bound_eq16" | "bound_eq42" => Empirical::Ergodic,
        _ => Empirical::MinGradsq,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub key: String,
    pub bound: f64,
    pub metric: Empirical,
    pub empirical: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub seeds: usize,
    pub mean_min_gradsq: f64,
    pub mean_ergodic: f64,
    pub tolerance: f64,
    pub low_seed_count: bool,
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn within_tolerance(empirical: f64, bound: f64) -> bool {
    empirical <= BOUND_TOLERANCE * bound
}

/// Seed-averaged min-over-k gradsq and ergodic average next to every bound
/// in `theory`.
pub fn bound_report(traces: &[Trace], theory: &TheoryReport) -> Result<BoundReport, HarnessError> {
    let first = traces.first().ok_or(HarnessError::Empty)?;
    if traces
        .iter()
        .any(|t| t.meta.config_key != first.meta.config_key)
    {
        return Err(HarnessError::ConfigMismatch);
    }
    let mut min_total = 0.0;
    let mut erg_total = 0.0;
    for t in traces {
        min_total += trace_min_gradsq(t).ok_or(HarnessError::Empty)?;
        erg_total += trace_ergodic_average(t)?;
    }
    let seeds = traces.len();
    let mean_min_gradsq = min_total / seeds as f64;
    let mean_ergodic = erg_total / seeds as f64;
    let checks = theory
        .bounds()
        .into_iter()
        .map(|(key, bound)| {
            let metric = bound_metric(key);
            let empirical = match metric {
                Empirical::MinGradsq => mean_min_gradsq,
                Empirical::Ergodic => mean_ergodic,
            };
            BoundCheck {
                key: key.to_string(),
                bound,
                metric,
                empirical,
                pass: within_tolerance(empirical, bound),
            }
        })
        .collect();
    Ok(BoundReport {
        seeds,
        mean_min_gradsq,
        mean_ergodic,
        tolerance: BOUND_TOLERANCE,
        low_seed_count: seeds < LOW_SEED_COUNT,
        checks,
    })
}

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write a trace as CSV. Non-default metadata goes in leading `#` lines.
pub fn write_trace<W: Write>(trace: &Trace, mut out: W) -> Result<(), HarnessError> {
    let meta = &trace.meta;
    match meta.eval {
        EvalScope::Full => {}
        EvalScope::Subsample { samples } => writeln!(out, "# eval=subsample:{samples}")?,
    }
    if let Some(k) = meta.total_iterations {
        writeln!(out, "# total_iterations={k}")?;
    }
    if let Some(key) = &meta.config_key {
        writeln!(out, "# config={key}")?;
    }
    if let Some(seed) = meta.seed {
        writeln!(out, "# seed={seed}")?;
    }
    if meta.skipped_updates > 0 {
        writeln!(out, "# skipped_updates={}", meta.skipped_updates)?;
    }
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let io_err = |e: csv::Error| HarnessError::Io(io::Error::other(e));
    w.write_record(TRACE_HEADER).map_err(io_err)?;
    for r in &trace.rows {
        w.write_record([
            r.k.to_string(),
            float(r.t),
            float(r.f),
            float(r.gradsq),
            float(r.gamma),
            r.max_delay_observed.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_to_csv(trace: &Trace) -> String {
    let mut buf = Vec::new();
    write_trace(trace, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

fn parse_meta(line: u64, body: &str, meta: &mut TraceMeta) -> Result<(), HarnessError> {
    let bad = |message: String| HarnessError::Parse { line, message };
    let Some((key, value)) = body.split_once('=') else {
        return Ok(());
    };
    match key.trim() {
        "eval" => {
            let samples = value
                .strip_prefix("subsample:")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("bad eval scope {value:?}")))?;
            meta.eval = EvalScope::Subsample { samples };
        }
        "total_iterations" => {
            meta.total_iterations = Some(
                value
                    .parse()
                    .map_err(|_| bad(format!("bad iteration count {value:?}")))?,
            );
        }
        "config" => meta.config_key = Some(value.to_string()),
        "seed" => {
            meta.seed = Some(
                value
                    .parse()
                    .map_err(|_| bad(format!("bad seed {value:?}")))?,
            );
        }
        "skipped_updates" => {
            meta.skipped_updates = value
                .parse()
                .map_err(|_| bad(format!("bad skip count {value:?}")))?;
        }
        _ => {}
    }
    Ok(())
}

/// Parse a trace CSV. Errors name the offending line (1-based).
pub fn parse_trace(text: &str) -> Result<Trace, HarnessError> {
    let mut meta = TraceMeta::default();
    for (idx, line) in text.lines().enumerate() {
        match line.strip_prefix('#') {
            Some(body) => parse_meta(idx as u64 + 1, body.trim(), &mut meta)?,
            None => break,
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut saw_header = false;
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if !saw_header {
            if record.iter().ne(TRACE_HEADER) {
                return Err(HarnessError::Parse {
                    line,
                    message: format!("expected header {}", TRACE_HEADER.join(",")),
                });
            }
            saw_header = true;
            continue;
        }
        if record.len() != TRACE_HEADER.len() {
            return Err(HarnessError::Parse {
                line,
                message: format!("expected 6 fields, found {}", record.len()),
            });
        }
        let int = |i: usize| -> Result<u64, HarnessError> {
            record[i].trim().parse().map_err(|_| HarnessError::Parse {
                line,
                message: format!("{}: not an integer: {:?}", TRACE_HEADER[i], &record[i]),
            })
        };
        let real = |i: usize| -> Result<f64, HarnessError> {
            record[i].trim().parse().map_err(|_| HarnessError::Parse {
                line,
                message: format!("{}: not a number: {:?}", TRACE_HEADER[i], &record[i]),
            })
        };
        rows.push(TraceRow {
            k: int(0)?,
            t: real(1)?,
            f: real(2)?,
            gradsq: real(3)?,
            gamma: real(4)?,
            max_delay_observed: int(5)?,
        });
    }
    if !saw_header {
        return Err(HarnessError::Parse {
            line: 1,
            message: "missing header".into(),
        });
    }
    Ok(Trace { rows, meta })
}

pub fn read_trace<R: Read>(mut input: R) -> Result<Trace, HarnessError> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    parse_trace(&text)
}

pub fn save_trace(trace: &Trace, path: &Path) -> Result<(), HarnessError> {
    write_trace(trace, io::BufWriter::new(fs::File::create(path)?))
}

pub fn load_trace(path: &Path) -> Result<Trace, HarnessError> {
    read_trace(fs::File::open(path)?)
}

/// Write one two-column `x y` file per curve into `dir`, named
/// `<stem>_<curve>.dat`. Returns the paths written.
pub fn write_plot_data(
    trace: &Trace,
    dir: &Path,
    stem: &str,
) -> Result<Vec<PathBuf>, HarnessError> {
    type Curve = (&'static str, fn(&TraceRow) -> (f64, f64));
    let curves: [Curve; 6] = [
        ("f", |r| (r.k as f64, r.f)),
        ("gradsq", |r| (r.k as f64, r.gradsq)),
        ("gamma", |r| (r.k as f64, r.gamma)),
        ("max_delay", |r| (r.k as f64, r.max_delay_observed as f64)),
        ("f_vs_time", |r| (r.t, r.f)),
        ("gradsq_vs_time", |r| (r.t, r.gradsq)),
    ];
    fs::create_dir_all(dir)?;
    let mut paths = Vec::with_capacity(curves.len());
    for (name, point) in curves {
        let path = dir.join(format!("{stem}_{name}.dat"));
        let mut out = io::BufWriter::new(fs::File::create(&path)?);
        for r in &trace.rows {
            let (x, y) = point(r);
            writeln!(out, "{x} {}", float(y))?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}
