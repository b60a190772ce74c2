//! Deterministic, translation-equivariant stand-in for a diffusion model.
//!
//! - `encode`: 8× box downsample, then the pseudo-inverse of the default
//!   latent→RGB color map;
//! - `decode`: the color map, then 8× nearest upsample;
//! - `denoise`: one step per level, `x ← x + λ·(blur(x) − x) + μ·(c − x)`
//!   where `blur` is a cyclic 3×3 box filter and `c` the conditioning target
//!   (per-channel prompt offset plus the encoded segmentation map);
//! - `add_noise`: `√ᾱ·x₀ + √(1−ᾱ)·n` with the scaled-linear ᾱ table.
//!
//! Every operation is pointwise or a cyclic convolution, so all of them
//! commute with rolls at matching scales. Each denoise step widens the
//! receptive field by one latent cell.

use std::collections::HashMap;

use nalgebra::{Matrix3x4, Matrix4x3};

use crate::error::BackendError;
use crate::field::{ImageField, LatentField, Lattice, LATENT_CHANNELS, VAE_SCALE};
use crate::latentvis::ColorMap34;
use crate::pipeline::backend::{Backend, Capabilities, ConditioningHandle};
use crate::pipeline::schedule::{alphas_cumprod, DenoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MockConfig {
    /// Pull toward the local blur per step.
    pub blur_mix: f32,
    /// Pull toward the conditioning target per step.
    pub cond_pull: f32,
    /// Perturb every denoise call by a call counter (for determinism tests).
    pub stochastic: bool,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            blur_mix: 0.5,
            cond_pull: 0.1,
            stochastic: false,
        }
    }
}

/// Raw call log, independent of any pipeline-side accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockCalls {
    pub encode: usize,
    pub decode: usize,
    pub add_noise: usize,
    pub conditioning: usize,
    /// `(from_level, to_level)` of every denoise call, in order.
    pub denoise: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
enum CondTarget {
    Offsets([f32; LATENT_CHANNELS]),
    Field(LatentField),
}

pub struct MockBackend {
    config: MockConfig,
    map: ColorMap34,
    weights: Matrix3x4<f64>,
    pinv: Matrix4x3<f64>,
    alphas: Vec<f64>,
    conds: HashMap<String, CondTarget>,
    pub calls: MockCalls,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn protocol(msg: impl Into<String>) -> BackendError {
    BackendError::Protocol(msg.into())
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        let map = ColorMap34::default();
        let weights = Matrix3x4::from_fn(|r, c| map.weights[r][c]);
        let wwt = weights * weights.transpose();
        let pinv = weights.transpose() * wwt.try_inverse().expect("color map has full row rank");
        Self {
            config,
            map,
            weights,
            pinv,
            alphas: alphas_cumprod(),
            conds: HashMap::new(),
            calls: MockCalls::default(),
        }
    }

    /// Latent of an image already at latent resolution.
    fn rgb_to_latent(&self, small: &ImageField) -> LatentField {
        let [h, w, _] = small.shape();
        let mut out = LatentField::zeros(LATENT_CHANNELS, h, w).expect("non-empty");
        for y in 0..h {
            for x in 0..w {
                let p = small.pixel(y, x);
                let centered = nalgebra::Vector3::from_fn(|r, _| p[r] as f64 - self.map.biases[r]);
                let l = self.pinv * centered;
                for c in 0..LATENT_CHANNELS {
                    let i = out.offset(c, y, x);
                    out.values_mut()[i] = l[c] as f32;
                }
            }
        }
        out
    }

    fn blur_step(&self, x: &LatentField, target: &CondTarget) -> LatentField {
        let [c, h, w] = x.shape();
        let (lambda, mu) = (self.config.blur_mix, self.config.cond_pull);
        LatentField::from_fn(c, h, w, |ch, y, col| {
            let mut sum = 0.0f32;
            for dy in [h - 1, 0, 1] {
                for dx in [w - 1, 0, 1] {
                    sum += x.get(ch, (y + dy) % h, (col + dx) % w);
                }
            }
            let v = x.get(ch, y, col);
            let t = match target {
                CondTarget::Offsets(o) => o[ch],
                CondTarget::Field(f) => f.get(ch, y, col),
            };
            v + lambda * (sum / 9.0 - v) + mu * (t - v)
        })
        .expect("same shape")
    }
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(MockConfig::default())
    }
}

impl Backend for MockBackend {
    fn capabilities(&mut self) -> Result<Capabilities, BackendError> {
        Ok(Capabilities {
            deterministic: !self.config.stochastic,
            concurrency_safe: true,
            latent_shape: None,
            scale_factor: VAE_SCALE,
        })
    }

    fn encode(&mut self, image: &ImageField) -> Result<LatentField, BackendError> {
        self.calls.encode += 1;
        let small = image
            .box_downscale(VAE_SCALE)
            .map_err(|e| protocol(e.to_string()))?;
        Ok(self.rgb_to_latent(&small))
    }

    fn decode(&mut self, latent: &LatentField) -> Result<ImageField, BackendError> {
        self.calls.decode += 1;
        let [c, h, w] = latent.shape();
        if c != LATENT_CHANNELS {
            return Err(protocol(format!("decode expects 4 channels, got {c}")));
        }
        let small = ImageField::from_fn(h, w, |y, x| {
            let l = nalgebra::Vector4::from_fn(|r, _| latent.get(r, y, x) as f64);
            let rgb = self.weights * l;
            [0, 1, 2].map(|r| (rgb[r] + self.map.biases[r]) as f32)
        })
        .expect("non-empty");
        Ok(small.upscale_nearest(VAE_SCALE))
    }

    fn add_noise(
        &mut self,
        clean: &LatentField,
        noise: &LatentField,
        level: usize,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        self.calls.add_noise += 1;
        if clean.shape() != noise.shape() {
            return Err(protocol(format!(
                "noise shape {:?} != latent shape {:?}",
                noise.shape(),
                clean.shape()
            )));
        }
        if level > schedule.total_steps() {
            return Err(protocol(format!("level {level} beyond schedule")));
        }
        let ab = schedule.alpha_bar(level, &self.alphas);
        let (a, b) = (ab.sqrt() as f32, (1.0 - ab).sqrt() as f32);
        let data = clean
            .data()
            .iter()
            .zip(noise.data())
            .map(|(x, n)| a * x + b * n)
            .collect();
        let [c, h, w] = clean.shape();
        Ok(LatentField::new(c, h, w, data).expect("same shape"))
    }

    fn denoise(
        &mut self,
        latent: &LatentField,
        from_level: usize,
        to_level: usize,
        cond: &ConditioningHandle,
        schedule: &DenoiseSchedule,
    ) -> Result<LatentField, BackendError> {
        self.calls.denoise.push((from_level, to_level));
        if to_level > from_level || from_level > schedule.total_steps() {
            return Err(protocol(format!(
                "cannot denoise from level {from_level} to {to_level}"
            )));
        }
        let target = self
            .conds
            .get(&cond.0)
            .ok_or_else(|| protocol(format!("unknown conditioning handle {:?}", cond.0)))?
            .clone();
        if let CondTarget::Field(f) = &target {
            if f.shape() != latent.shape() {
                return Err(protocol(format!(
                    "conditioning shape {:?} != latent shape {:?}",
                    f.shape(),
                    latent.shape()
                )));
            }
        }
        let mut x = latent.clone();
        for _ in to_level..from_level {
            x = self.blur_step(&x, &target);
        }
        if self.config.stochastic && from_level != to_level {
            let jitter = 1e-3 * self.calls.denoise.len() as f32;
            x = x.map(|v| v + jitter);
        }
        Ok(x)
    }

    fn prepare_conditioning(
        &mut self,
        prompt: &str,
        segmap: Option<&ImageField>,
    ) -> Result<ConditioningHandle, BackendError> {
        self.calls.conditioning += 1;
        let hash = fnv1a(prompt.as_bytes());
        let offsets: [f32; LATENT_CHANNELS] =
            std::array::from_fn(|c| (((hash >> (16 * c)) & 0xffff) as f32 / 65535.0) - 0.5);
        let target = match segmap {
            None => CondTarget::Offsets(offsets),
            Some(seg) => {
                let small = seg
                    .box_downscale(VAE_SCALE)
                    .map_err(|e| protocol(e.to_string()))?;
                let mut f = self.rgb_to_latent(&small);
                for (c, off) in offsets.iter().enumerate() {
                    for v in f.channel_mut(c) {
                        *v += off;
                    }
                }
                CondTarget::Field(f)
            }
        };
        let handle = format!("mock-{}", self.conds.len());
        self.conds.insert(handle.clone(), target);
        Ok(ConditioningHandle(handle))
    }
}
