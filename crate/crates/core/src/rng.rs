//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 keystream keyed on `(seed, stream_id)`; the
//! position inside the stream is the block counter. Two handles built from
//! the same pair produce the same sequence no matter which thread or in what
//! order they are created, so seed sweeps need no shared generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Handle to one deterministic random stream.
pub type SimRng = ChaCha8Rng;

/// Stream carrying the data batches of a run.
pub const STREAM_DATA: u64 = 0;
/// Stream used for one-off calibration draws (e.g. the regression step scale).
pub const STREAM_CALIBRATION: u64 = 1;
/// Stream for gradient-oracle noise in the SGD simulator.
pub const STREAM_GRADIENT: u64 = 2;
/// Stream for injected update noise in the SGD simulator.
pub const STREAM_NOISE: u64 = 3;
/// Stream for stand-alone probes.
pub const STREAM_PROBE: u64 = 4;

pub fn seeded_rng(seed: u64, stream_id: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}
