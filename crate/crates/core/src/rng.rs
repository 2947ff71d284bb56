//! Counter-based random streams.
//!
//! Every draw in a simulation is addressed by `(trial seed, step, channel)`:
//! the address is hashed into a fresh ChaCha8 key, so the numbers a trial
//! sees do not depend on how trials are scheduled across threads. Gaussian
//! variates use the Box–Muller transform on 53-bit uniforms.

use nalgebra::DVector;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recorded in run metadata so results can be regenerated bit-for-bit.
pub const RNG_DESCRIPTION: &str = "chacha8 keyed by splitmix64(seed, step, channel); box-muller normals";

/// Draw channels within one trial step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Process = 1,
    Measurement = 2,
    InitialState = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of two words.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(a) ^ b.rotate_left(17) ^ 0xA076_1D64_78BD_642F)
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    mix(master, index)
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn unit_open_closed(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Pair of independent standard normals from two uniforms in (0, 1].
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let radius = (-2.0 * u1.ln()).sqrt();
    let angle = std::f64::consts::TAU * u2;
    (radius * angle.cos(), radius * angle.sin())
}

pub fn standard_normals(rng: &mut impl RngCore, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    let mut i = 0;
    while i < n {
        let (a, b) = box_muller(unit_open_closed(rng), unit_open_closed(rng));
        out[i] = a;
        if i + 1 < n {
            out[i + 1] = b;
        }
        i += 2;
    }
    out
}

/// Draws for one trial, addressable by step and channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseStream {
    seed: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&self, step: u64, channel: Channel) -> ChaCha8Rng {
        seeded(mix(mix(self.seed, step), channel as u64))
    }

    pub fn standard_normals(&self, step: u64, channel: Channel, n: usize) -> DVector<f64> {
        standard_normals(&mut self.rng(step, channel), n)
    }
}
