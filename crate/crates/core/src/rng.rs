//! Per-purpose random streams derived from one seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Gumbel = 3,
    Skew = 4,
    Balance = 5,
    Embeddings = 6,
    DevData = 7,
    TestData = 8,
}

/// Independent ChaCha stream for `purpose`; reseeding one purpose leaves the
/// others untouched.
pub fn stream(seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}
