//! Named random streams derived from one 64-bit seed.
//!
//! Every stochastic component asks for its own stream by name, so adding a
//! consumer in one place never shifts the numbers another component sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Stable across platforms and compiler versions.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for a named component.
    pub fn child(&self, name: &str) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed ^ fnv1a64(name.as_bytes())),
        }
    }

    /// Child stream indexed by an integer (epoch, fold, user ordinal...).
    pub fn index(&self, i: u64) -> SeedStream {
        SeedStream {
            seed: splitmix64(self.seed.wrapping_add(splitmix64(i))),
        }
    }

    pub fn rng(&self) -> Rng {
        Rng::seed_from_u64(self.seed)
    }
}
