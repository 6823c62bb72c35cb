//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a stream addressed by a
//! path of integers (master seed, purpose tag, iteration, chunk, ...). The
//! work split across threads never enters the address, so results do not
//! depend on the number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of items handled by one stream in data-parallel loops.
pub const CHUNK: usize = 4096;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the tree of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream {
            key: splitmix64(seed ^ 0x6973_696E_675F_6376),
        }
    }

    /// Child stream for a tag (purpose, iteration, grid point, ...).
    pub fn derive(&self, tag: u64) -> Self {
        SeedStream {
            key: splitmix64(self.key ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F))),
        }
    }

    /// Generator for one counter under this node.
    pub fn rng(&self, counter: u64) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        let mut z = self.key;
        for chunk in seed.chunks_mut(8) {
            z = splitmix64(z);
            chunk.copy_from_slice(&z.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(counter);
        rng
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

/// Purpose tags for derived streams.
pub(crate) mod tag {
    pub const EVOLVE: u64 = 1;
    pub const MAGNETIZATION: u64 = 2;
    pub const SPINE: u64 = 3;
    pub const SWEEP: u64 = 4;
    pub const FIT: u64 = 5;
    pub const FREE_INIT: u64 = 6;
    pub const PLUS_INIT: u64 = 7;
    pub const GLAUBER: u64 = 8;
    pub const CORPUS: u64 = 9;
}
