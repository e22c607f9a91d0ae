//! Seeded random streams.
//!
//! Every random draw comes from ChaCha20 (`rand_chacha::ChaCha20Rng`), keyed
//! by a 64-bit seed, with one 64-bit stream id per purpose. A Monte Carlo
//! realization `r` of a run seeded with `s` uses the key
//! [`realization_seed`]`(s, r)`; within it, velocities, process noise and
//! measurement noise each read their own stream, so adding or removing one
//! kind of noise never shifts the others. Normal deviates use the ziggurat
//! sampler of `rand_distr::StandardNormal`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::linalg::StateVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Velocity = 1,
    ProcessNoise = 2,
    MeasurementNoise = 3,
    Synthesis = 4,
}

pub fn stream(seed: u64, purpose: Purpose) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// SplitMix64 finalizer applied to `seed ⊕ golden·(r + 1)`; maps each
/// realization index to an unrelated ChaCha key.
pub fn realization_seed(seed: u64, realization: u64) -> u64 {
    let mut z = seed
        ^ realization
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn standard_normal_vector(rng: &mut ChaCha20Rng, len: usize) -> StateVector {
    StateVector::from_iterator(len, (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)))
}
