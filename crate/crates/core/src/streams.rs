//! Counter-based random substreams.
//!
//! Every random quantity in a Monte Carlo run is drawn from a ChaCha8 stream
//! addressed by a path of integers (seed, realization, branch, m, ...), so a
//! realization reproduces bit-for-bit regardless of which thread computes it
//! or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hashes a path of integers onto a single 64-bit value.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// ChaCha8 generator keyed by `seed` on the stream selected by `path`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = seed;
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(derive_seed(0, path));
    rng
}

/// Which of the two future-sample families a chain belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Chains `x^(m)`, combined with the baseline prior.
    Primary,
    /// Chains `x̃^(m)`, combined with the informative prior.
    Mirror,
}

impl Branch {
    fn tag(self) -> u64 {
        match self {
            Branch::Primary => 1,
            Branch::Mirror => 2,
        }
    }
}

/// The substreams belonging to one Monte Carlo realization.
#[derive(Clone, Copy, Debug)]
pub struct RealizationStreams {
    seed: u64,
    index: u64,
}

impl RealizationStreams {
    pub fn new(seed: u64, index: u64) -> Self {
        Self { seed, index }
    }

    pub fn theta(&self) -> ChaCha8Rng {
        substream(self.seed, &[self.index, 0])
    }

    pub fn chain(&self, branch: Branch, m: usize) -> ChaCha8Rng {
        substream(self.seed, &[self.index, branch.tag(), m as u64])
    }
}
