//! Counter-based pseudo-random numbers for reproducible simulation.
//!
//! Every variate is a pure function of `(seed, step)`, so path generation
//! can be scheduled on any number of workers and still produce identical
//! output: there is no sequential generator state to share or split.
//! The construction is the SplitMix64 output function applied to a
//! Weyl-sequence counter, which is the standard stateless form of that
//! generator.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer (Stafford mix 13).
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for path `index` in a batch keyed by `master`.
///
/// The derived seed regenerates the path on its own, so any path from a
/// batch can be replayed individually.
#[inline]
pub fn path_seed(master: u64, index: u64) -> u64 {
    mix(master ^ GOLDEN.wrapping_mul(index.wrapping_add(1)))
}

/// Raw 64-bit variate for counter `step` under `seed`.
#[inline]
pub fn bits(seed: u64, step: u64) -> u64 {
    mix(seed.wrapping_add(GOLDEN.wrapping_mul(step)))
}

/// Uniform variate in `[0, 1)` for counter `step` under `seed`.
///
/// Uses the top 53 bits, so every value is an exact multiple of 2^-53.
#[inline]
pub fn uniform(seed: u64, step: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    (bits(seed, step) >> 11) as f64 * SCALE
}
