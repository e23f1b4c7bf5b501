//! Counter-style seeding: every Monte Carlo path owns streams keyed by `(seed, path)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent stream families drawn by a single path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Gaussian increments and exit samples.
    Diffusion = 0,
    /// The uniform variables of the acceptance test.
    Acceptance = 1,
}

pub fn path_rng(seed: u64, path: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path + stream as u64);
    rng
}

/// A seed for an auxiliary phase (density fits, reference runs) derived from the run seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
