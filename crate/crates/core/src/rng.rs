//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream id)`; distinct
//! ids give independent, non-overlapping sequences, so parallel probes and
//! ensemble members never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn stream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
