//! Seeded random streams. Every per-stay stream is derived from
//! `(seed, stream tag, stay id)` so results do not depend on iteration
//! order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, tag: u64, id: i64) -> u64 {
    mix(mix(seed ^ mix(tag)) ^ id as u64)
}

pub fn stream(seed: u64, tag: u64, id: i64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, id))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub mod tags {
    pub const CONTROL_ONSET: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const SYNTH_STAY: u64 = 3;
    pub const SYNTH_PATIENT: u64 = 4;
    pub const MODEL_INIT: u64 = 5;
    pub const BATCH_ORDER: u64 = 6;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, tags::CONTROL_ONSET, 42).random();
        let b: u64 = stream(7, tags::CONTROL_ONSET, 42).random();
        let c: u64 = stream(7, tags::CONTROL_ONSET, 43).random();
        let d: u64 = stream(8, tags::CONTROL_ONSET, 42).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
