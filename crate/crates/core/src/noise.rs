//! Seeded Gaussian noise.
//!
//! The generator is ChaCha20 (`rand_chacha::ChaCha20Rng::seed_from_u64`),
//! whose output stream is fixed by its reference definition. Normal deviates
//! come from the basic (trigonometric) Box–Muller transform evaluated in
//! `f64` with `libm`, so the same seed produces the same bits everywhere:
//!
//! ```text
//! u1 = 1 - (next_u64 >> 11) * 2^-53        in (0, 1]
//! u2 =     (next_u64 >> 11) * 2^-53        in [0, 1)
//! r  = sqrt(-2 ln u1)
//! z0 = r cos(2 pi u2),  z1 = r sin(2 pi u2)
//! ```
//!
//! Values are emitted in pairs `z0, z1` and rounded to `f32`; for an odd
//! element count the final `z1` is dropped.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ImageField, LatentField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededNoiseSpec {
    pub seed: u64,
    pub shape: [usize; 3],
}

impl SeededNoiseSpec {
    pub fn new(seed: u64, shape: [usize; 3]) -> Self {
        Self { seed, shape }
    }
}

/// Standard-normal stream over ChaCha20.
pub struct GaussianStream {
    rng: ChaCha20Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    fn unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.unit();
        let u2 = self.unit();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * libm::sin(angle));
        r * libm::cos(angle)
    }

    pub fn fill(&mut self, n: usize) -> Vec<f32> {
        (0..n).map(|_| self.next_normal() as f32).collect()
    }
}

/// I.i.d. standard-normal latent, a pure function of `spec`.
pub fn sample_noise(spec: &SeededNoiseSpec) -> Result<LatentField> {
    let [c, h, w] = spec.shape;
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidShape(format!("{c}x{h}x{w} has a zero axis")));
    }
    let data = GaussianStream::new(spec.seed).fill(c * h * w);
    LatentField::new(c, h, w, data)
}

/// Standard-normal image-shaped field (`H×W×3`).
pub fn sample_image_noise(seed: u64, height: usize, width: usize) -> Result<ImageField> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidShape(format!("{height}x{width} image")));
    }
    ImageField::new(
        height,
        width,
        GaussianStream::new(seed).fill(height * width * 3),
    )
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for an independent stream (frame index, layer index, ...).
///
/// `derive_seed(s, k) = splitmix64(s ^ splitmix64(k + 1))`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(1)))
}
