//! Seed mixing and seeded generators.
//!
//! Every random draw in the pipeline is keyed by explicit integers so results
//! never depend on thread scheduling or worker assignment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type DrawRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of fields into one 64-bit seed, avalanching after each.
pub fn mix_fields(fields: &[u64]) -> u64 {
    fields.iter().fold(0u64, |acc, &f| splitmix64(acc ^ f))
}

/// Seed for a `(global_seed, epoch, sample_index)` draw key.
pub fn mix64(global_seed: u64, epoch: u64, sample_index: u64) -> u64 {
    mix_fields(&[global_seed, epoch, sample_index])
}

/// Distinct draw streams derived from one global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Augment = 0xA11C_E5ED,
    Order = 0x0D0E_5EED,
    Init = 0x1417_5EED,
    Synth = 0x5E17_5EED,
}

pub fn rng_from_seed(seed: u64) -> DrawRng {
    DrawRng::seed_from_u64(seed)
}

pub fn stream_rng(global_seed: u64, stream: Stream, a: u64, b: u64) -> DrawRng {
    rng_from_seed(mix_fields(&[global_seed, stream as u64, a, b]))
}
