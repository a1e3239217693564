//! Seeded random streams.
//!
//! Every experiment seed expands into independent ChaCha20 streams (the
//! 64-bit seed is widened to a 256-bit key by `SeedableRng::seed_from_u64`,
//! and each purpose gets its own stream id). ChaCha is a counter-based
//! cipher, so a given `(seed, stream)` yields the same sequence on every
//! platform. Gaussian variates use `rand_distr::StandardNormal` (ziggurat).

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Purpose of a random stream. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Additive measurement noise.
    Noise,
    /// Block selection inside the randomized solvers.
    Selection,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Noise => 1,
            Stream::Selection => 2,
        }
    }
}

pub type SeededRng = ChaCha20Rng;

pub fn stream_rng(seed: u64, stream: Stream) -> SeededRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
