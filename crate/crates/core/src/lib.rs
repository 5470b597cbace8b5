//! Asynchronous parallel stochastic gradient methods.
//!
//! Two update rules are covered: consistent reads, where every gradient is
//! evaluated at a true past iterate, and inconsistent reads, where the
//! iterate a worker sees may be missing some recent single-coordinate
//! writes. Each has a deterministic single-threaded simulator and a real
//! multithreaded engine. The `theory` module evaluates steplength rules and
//! convergence bounds; `harness` turns traces into metrics and speedups.

pub mod config;
pub mod harness;
pub mod history;
pub mod parallel;
pub mod param;
pub mod problems;
pub mod rng;
pub mod sim;
pub mod theory;
pub mod trace;

pub use config::{ConfigError, DelayModel, GammaRule, Mode, ReadModel, RunConfig};
pub use history::{HistoryError, HistoryRing};
pub use param::ParamVector;
pub use problems::{Problem, ProblemConstants, ProblemError, Provenance};
pub use rng::{derive_stream, Purpose, SeedSpec};
pub use trace::{Trace, TraceRow};
