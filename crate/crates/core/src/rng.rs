//! Seed stream splitting.
//!
//! Every source of randomness is a [`ChaCha8Rng`] seeded from a root seed plus
//! a label and a list of indices, e.g. `("design", [m, n])` for the initial
//! design of episode `n` in policy update `m`. The derivation folds the label
//! bytes and indices through SplitMix64, so streams are independent of each
//! other and adding a new consumer never shifts an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit seed for the named substream.
pub fn derive_seed(root: u64, label: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(root);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    // separator so ("ab", [1]) and ("a", [..]) cannot collide on byte folding
    h = splitmix64(h ^ 0xFF);
    for &i in indices {
        h = splitmix64(h ^ i);
    }
    h
}

/// Returns a generator for the named substream.
pub fn stream(root: u64, label: &str, indices: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(root, label, indices))
}
