//! Named random streams split from one root seed.
//!
//! Every component draws from its own ChaCha stream so that, for example,
//! changing the dropout configuration never perturbs the data shuffle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream identifiers under a single root seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Shuffle = 1,
    Dropout = 2,
    TieBreak = 3,
    Init = 4,
    MonteCarlo = 5,
    Trees = 6,
    SynthWeights = 7,
    SynthFeatures = 8,
}

/// RNG for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// RNG for a sub-stream keyed by an arbitrary tuple of indices
/// (epoch, query position, shard, ...).
pub fn substream(seed: u64, stream: Stream, keys: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(seed ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407));
    for &k in keys {
        h = splitmix64(h ^ k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    rng.set_stream(stream as u64);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
