//! Seeded randomness. Every stochastic routine takes an explicit generator or
//! seed; there is no global RNG.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from a parent seed and a path of
/// labels (splitmix64 finalizer applied per component).
pub fn derive_seed(parent: u64, path: &[u64]) -> u64 {
    let mut state = parent;
    for &p in path {
        state = splitmix(state ^ splitmix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    }
    state
}

/// Stable 64-bit hash of a label, for use in [`derive_seed`] paths.
pub fn label_hash(label: &str) -> u64 {
    // FNV-1a
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One Poisson draw; a non-positive mean yields zero.
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    match Poisson::new(mean) {
        Ok(d) => d.sample(rng) as u64,
        Err(_) => mean as u64,
    }
}

/// Standard normal draw.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}
