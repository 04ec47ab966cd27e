//! Per-subsystem random streams split from one root seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent ChaCha streams derived from a single root seed, so that
/// adding a subsystem (for example embeddings) never shifts the draws of
/// another (for example network weights).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    ModelWeights = 1,
    Embeddings = 2,
    Shuffle = 3,
    Synthetic = 4,
    Probe = 5,
    PairSampling = 6,
    Incidents = 7,
}

pub fn rng_for(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
