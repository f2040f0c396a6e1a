//! Seed derivation and the RNG type used throughout the crate.
//!
//! Every module draws from streams derived as `hash(master, module, item)`,
//! so per-item work can be sharded without changing any draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derives a child seed from a master seed, a module name and an item id.
pub fn derive_seed(master: u64, module: &str, item: u64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ fnv1a(module));
    splitmix64(b ^ splitmix64(item.wrapping_add(0xA5A5_A5A5)))
}

/// An RNG for `(master, module, item)`.
pub fn stream(master: u64, module: &str, item: u64) -> LabRng {
    LabRng::seed_from_u64(derive_seed(master, module, item))
}

pub fn seeded(seed: u64) -> LabRng {
    LabRng::seed_from_u64(seed)
}
