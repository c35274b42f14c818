//! Seeded Gaussian source used for model weights, initial latents and
//! witness sampling.
//!
//! Streams are ChaCha8 keyed by the 64-bit seed with an explicit stream id, so
//! independent consumers (noise, layer 0, layer 1, ...) never share state.
//! Normals come from the Box-Muller transform.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..bound` (`bound >= 1`).
    pub fn below(&mut self, bound: u64) -> u64 {
        // Lemire's widening multiply; the bias is below 2^-64 * bound.
        ((self.rng.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // u1 in (0, 1] keeps the logarithm finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let radius = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * PI * u2;
        self.spare = Some(radius * libm::sin(angle));
        radius * libm::cos(angle)
    }

    pub fn normals(&mut self, count: usize, std_dev: f64) -> Vec<f64> {
        (0..count)
            .map(|_| std_dev * self.standard_normal())
            .collect()
    }
}
