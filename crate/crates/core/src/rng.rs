//! Seeded random streams.
//!
//! Every stochastic quantity is drawn from a ChaCha20 generator keyed by the
//! run seed, with a distinct stream id per purpose. Streams never overlap,
//! so adding a new consumer does not shift the draws of existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Stream ids for the synthetic data generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Design = 1,
    Centers = 2,
    TrainNoise = 3,
    TestDesign = 4,
    TestNoise = 5,
    Subsample = 6,
    Auxiliary = 7,
}

pub fn substream(seed: u64, stream: Stream) -> ChaCha20Rng {
    substream_raw(seed, stream as u64)
}

pub fn substream_raw(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
