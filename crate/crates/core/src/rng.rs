//! Deterministic, schedule-independent random streams.
//!
//! Every unit of Monte Carlo work (one matrix element, one Markov chain, one
//! β point) owns an [`RngStream`] derived from the master seed and a stream
//! id. Results never depend on how tasks are spread over worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        RngStream {
            master_seed,
            stream_id,
        }
    }

    /// A sub-stream for task `index` of kind `tag` below this one.
    pub fn child(&self, tag: u64, index: u64) -> RngStream {
        let id = mix(mix(self.stream_id ^ mix(tag)) ^ index);
        RngStream {
            master_seed: self.master_seed,
            stream_id: id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.master_seed);
        r.set_stream(self.stream_id);
        r
    }
}

/// Stream tags used by the pipelines.
pub mod tags {
    pub const ENDPOINTS: u64 = 1;
    pub const BASIS: u64 = 2;
    pub const MATRIX: u64 = 3;
    pub const LATTICE_U: u64 = 4;
    pub const LATTICE_C: u64 = 5;
    pub const LATTICE_F: u64 = 6;
    pub const CHAIN: u64 = 7;
}
