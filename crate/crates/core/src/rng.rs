//! Reproducible, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the experiment's master seed
//! and a 64-bit stream id. Hierarchical ids (sweep point, batch, path, ...)
//! are folded into one id with a SplitMix64 finalizer, so any two distinct
//! paths of the key tree land on unrelated ChaCha streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Position in the stream tree: a master seed plus a derived stream id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub master_seed: u64,
    pub id: u64,
}

impl StreamKey {
    pub fn root(master_seed: u64) -> Self {
        StreamKey { master_seed, id: 0 }
    }

    /// Key of the `k`-th child of this node.
    pub fn child(&self, k: u64) -> Self {
        StreamKey {
            master_seed: self.master_seed,
            id: splitmix64(self.id ^ splitmix64(k.wrapping_add(0x5851_F42D_4C95_7F2D))),
        }
    }

    /// Convenience for a chain of `child` calls.
    pub fn path(&self, ks: &[u64]) -> Self {
        ks.iter().fold(*self, |key, &k| key.child(k))
    }

    pub fn rng(&self) -> RngStream {
        RngStream::new(self.master_seed, self.id)
    }
}

/// Single-owner random stream. Never share one between workers; derive a
/// child key instead.
#[derive(Clone, Debug)]
pub struct RngStream(ChaCha8Rng);

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_id);
        RngStream(inner)
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
