//! Counter-based splittable random streams.
//!
//! Every stochastic routine in this crate takes an explicit [`StreamKey`]
//! instead of a shared mutable generator. A key is a 64-bit state derived
//! from the master seed by repeated SplitMix64-style mixing; `child(i)`
//! derives the key for sub-task `i` without consuming randomness from the
//! parent. Work items (records, paths) each get their own key, so generation
//! is bit-identical regardless of how the items are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; bijective on u64.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in a deterministic stream tree keyed by (master seed, indices...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey(u64);

impl StreamKey {
    /// Root key for a master seed.
    pub fn new(master_seed: u64) -> Self {
        StreamKey(mix64(master_seed))
    }

    /// Derive the key of the `index`-th child stream.
    pub fn child(self, index: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(index)))
    }

    /// Instantiate the stream as a concrete generator.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Raw key state, used when recording the provenance of an output.
    pub fn state(self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn children_are_distinct_and_stable() {
        let root = StreamKey::new(42);
        let a = root.child(0);
        let b = root.child(1);
        assert_ne!(a.state(), b.state());
        // Re-deriving the same path gives the same key.
        assert_eq!(StreamKey::new(42).child(0).state(), a.state());
    }

    #[test]
    fn same_key_same_stream() {
        let key = StreamKey::new(7).child(3).child(11);
        let xs: Vec<u64> = (0..8).map(|_| 0u64).scan(key.rng(), |r, _| Some(r.gen())).collect();
        let ys: Vec<u64> = (0..8).map(|_| 0u64).scan(key.rng(), |r, _| Some(r.gen())).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn sibling_streams_differ() {
        let root = StreamKey::new(1);
        let x: u64 = root.child(0).rng().gen();
        let y: u64 = root.child(1).rng().gen();
        assert_ne!(x, y);
    }
}
