//! Seed derivation: one root seed fans out into independent per-purpose
//! streams so masking, augmentation, init and sampling stay individually
//! reproducible. `derive(root, purpose, index)` is the single splitting
//! function; resuming a run at step n re-derives the exact stream for
//! that step with no RNG state to persist.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Purpose tag of a derived stream. Each variant owns a fixed salt so
/// streams never collide across purposes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Parameter initialization (index = parameter ordinal).
    Init,
    /// MAE mask plan (index = global step).
    Mask,
    /// Data augmentation (index = epoch * 2^32 + sample ordinal).
    Augment,
    /// Epoch shuffling (index = epoch).
    Shuffle,
    /// Manifest sampling.
    Sampler,
    /// Synthetic data generation.
    Synthetic,
    /// Subset splitting.
    Subset,
}

impl Purpose {
    fn salt(self) -> u64 {
        match self {
            Purpose::Init => 0x5eed_0001,
            Purpose::Mask => 0x5eed_0002,
            Purpose::Augment => 0x5eed_0003,
            Purpose::Shuffle => 0x5eed_0004,
            Purpose::Sampler => 0x5eed_0005,
            Purpose::Synthetic => 0x5eed_0006,
            Purpose::Subset => 0x5eed_0007,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derive a child seed from the root. Deterministic, collision-resistant
/// across (purpose, index) pairs for any fixed root.
pub fn derive(root: u64, purpose: Purpose, index: u64) -> u64 {
    let a = splitmix64(root ^ purpose.salt());
    splitmix64(a ^ splitmix64(index))
}

/// RNG for a derived stream.
pub fn rng(root: u64, purpose: Purpose, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(root, purpose, index))
}
