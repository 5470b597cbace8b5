//! Deterministic random-stream derivation.
//!
//! Every stream is a ChaCha8 keystream keyed by the master seed. The
//! `(worker, purpose)` pair selects the ChaCha stream id, so streams are
//! counter-based: any draw can be reached by position without touching
//! shared state, and no two `(worker, purpose)` pairs share a keystream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Stream = ChaCha8Rng;

/// What a stream is used for. Each purpose gets its own keystream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    /// Minibatch sample indices ξ.
    Sample,
    /// Coordinate choice i_k.
    Coordinate,
    /// Delay draws τ (consistent-read simulation).
    Delay,
    /// Read-set draws J(k, m) (inconsistent-read simulation).
    Read,
    /// Synthetic dataset generation.
    Data,
    /// Initial point.
    Init,
    /// Problem construction (matrices, noise vectors, true weights).
    Problem,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Sample => 1,
            Purpose::Coordinate => 2,
            Purpose::Delay => 3,
            Purpose::Read => 4,
            Purpose::Data => 5,
            Purpose::Init => 6,
            Purpose::Problem => 7,
        }
    }
}

const PURPOSE_BITS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        SeedSpec { master_seed }
    }

    pub fn stream(&self, worker: u64, purpose: Purpose) -> Stream {
        derive_stream(*self, worker, purpose)
    }
}

/// Derive the stream for `(worker, purpose)`.
///
/// Worker ids must fit in 56 bits; larger ids would alias another pair.
pub fn derive_stream(seeds: SeedSpec, worker: u64, purpose: Purpose) -> Stream {
    assert!(
        worker < (1u64 << (64 - PURPOSE_BITS)),
        "worker id {worker} exceeds the stream id space"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.master_seed);
    rng.set_stream((worker << PURPOSE_BITS) | purpose.tag());
    rng
}

/// Position a stream at its `draw`-th 32-bit word.
pub fn jump_to(stream: &mut Stream, draw: u128) {
    stream.set_word_pos(draw);
}
