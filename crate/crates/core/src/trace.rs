use serde::{Deserialize, Serialize};

/// One checkpoint of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    /// Seconds since run start, excluding checkpoint evaluation. Simulated
    /// modes record 0 so that their traces are bit-reproducible.
    pub t: f64,
    pub f: f64,
    /// ‖∇f(x_k)‖².
    pub gradsq: f64,
    pub gamma: f64,
    /// Largest staleness seen up to and including iteration k.
    pub max_delay_observed: u64,
}

/// Where checkpoint metrics were evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EvalScope {
    /// Full finite-sum objective and gradient.
    #[default]
    Full,
    /// A fixed evaluation subsample of the dataset.
    Subsample { samples: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub eval: EvalScope,
    /// K of the producing run, when known.
    pub total_iterations: Option<u64>,
    /// Identifies the producing configuration up to the seed.
    pub config_key: Option<String>,
    /// Master seed of the producing run.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Iterations that applied no update (sparse variant with g_k = 0).
    pub skipped_updates: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
    #[serde(default)]
    pub meta: TraceMeta,
}

impl Trace {
    pub fn new(rows: Vec<TraceRow>) -> Self {
        Trace {
            rows,
            meta: TraceMeta::default(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// Rows for iterates x_0 … x_{K−1}, the K points the ergodic bounds
    /// average over. Falls back to all rows when K is unknown.
    pub fn bound_window(&self) -> &[TraceRow] {
        match self.meta.total_iterations {
            Some(total) => {
                let end = self.rows.partition_point(|r| r.k < total);
                &self.rows[..end]
            }
            None => &self.rows,
        }
    }

    pub fn gradsq(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.gradsq).collect()
    }

    pub fn objective(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.f).collect()
    }

    /// True when rows are strictly increasing in k and nondecreasing in t.
    pub fn is_well_ordered(&self) -> bool {
        self.rows
            .windows(2)
            .all(|w| w[0].k < w[1].k && w[0].t <= w[1].t)
    }
}
