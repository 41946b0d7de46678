//! Reproducible random substreams.
//!
//! A [`Seed`] is a node in a tree of 64-bit keys: children are derived with a SplitMix64
//! finaliser, and each node opens ChaCha8 generators whose stream id selects the role/index.
//! ChaCha is itself counter based, so any (seed path, role, index) maps to the same numbers
//! regardless of how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Latent log-volatility innovations (one sequential stream).
    Latent,
    /// Brownian increments of curve `i`.
    Brownian(u64),
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seed {
    /// Child key for `label`; distinct labels give unrelated keys.
    pub fn child(self, label: u64) -> Seed {
        Seed(splitmix64(splitmix64(self.0) ^ splitmix64(label.wrapping_add(0xD1B5_4A32_D192_ED03))))
    }

    pub fn rng(self, stream: Stream) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        let mut s = self.0;
        for chunk in key.chunks_exact_mut(8) {
            s = splitmix64(s);
            chunk.copy_from_slice(&s.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(match stream {
            Stream::Latent => 0,
            Stream::Brownian(i) => i.wrapping_add(1),
        });
        rng
    }
}

impl From<u64> for Seed {
    fn from(s: u64) -> Self {
        Seed(s)
    }
}
