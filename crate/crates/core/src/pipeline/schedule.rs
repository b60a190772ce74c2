use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training timesteps of the reference latent diffusion models.
pub const TRAIN_TIMESTEPS: usize = 1000;
const BETA_START: f64 = 0.00085;
const BETA_END: f64 = 0.012;

/// `ᾱ_t` for the scaled-linear beta schedule used by Stable Diffusion v1:
/// `β_t = (√β₀ + t/(T−1) · (√β₁ − √β₀))²`, `ᾱ_t = Π (1 − β_s)`.
pub fn alphas_cumprod() -> Vec<f64> {
    let (a, b) = (BETA_START.sqrt(), BETA_END.sqrt());
    let last = (TRAIN_TIMESTEPS - 1) as f64;
    let mut acc = 1.0;
    (0..TRAIN_TIMESTEPS)
        .map(|t| {
            let s = a + (b - a) * t as f64 / last;
            acc *= 1.0 - s * s;
            acc
        })
        .collect()
}

/// Step bookkeeping shared by every pipeline.
///
/// Steps are *noise levels*: level `N` is pure noise, level 0 is a clean
/// latent, and denoising runs from high to low levels. A fraction `p` of
/// the process completed corresponds to level `N − round(p·N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseSchedule {
    total_steps: usize,
    switch_fraction: f64,
    timesteps: Vec<usize>,
}

impl Default for DenoiseSchedule {
    fn default() -> Self {
        Self::new(30, 0.7).expect("default schedule is valid")
    }
}

impl DenoiseSchedule {
    pub fn new(total_steps: usize, switch_fraction: f64) -> Result<Self> {
        if total_steps == 0 || total_steps > TRAIN_TIMESTEPS {
            return Err(Error::Range(format!(
                "total steps {total_steps} outside 1..={TRAIN_TIMESTEPS}"
            )));
        }
        if !(0.0..=1.0).contains(&switch_fraction) {
            return Err(Error::Range(format!(
                "switch fraction {switch_fraction} outside [0, 1]"
            )));
        }
        let ratio = TRAIN_TIMESTEPS / total_steps;
        // level l (1..=N) -> training timestep, "leading" spacing with offset 1;
        // the offset is dropped at stride 1 so the top level stays in the table
        let offset = usize::from(ratio > 1);
        let timesteps = (1..=total_steps)
            .rev()
            .map(|l| (l - 1) * ratio + offset)
            .collect();
        Ok(Self {
            total_steps,
            switch_fraction,
            timesteps,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn switch_fraction(&self) -> f64 {
        self.switch_fraction
    }

    /// Training timesteps for levels `N, N−1, …, 1` (strictly decreasing).
    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    /// Training timestep of a level, `None` for the clean level 0.
    pub fn timestep(&self, level: usize) -> Option<usize> {
        (1..=self.total_steps)
            .contains(&level)
            .then(|| self.timesteps[self.total_steps - level])
    }

    /// Steps completed before the switch: `round(s·N)`.
    pub fn switch_step(&self) -> usize {
        (self.switch_fraction * self.total_steps as f64).round() as usize
    }

    /// Noise level at which the switch happens.
    pub fn switch_level(&self) -> usize {
        self.total_steps - self.switch_step()
    }

    /// Noise level after a fraction `p` of the process.
    pub fn level_after_fraction(&self, p: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Range(format!("fraction {p} outside [0, 1]")));
        }
        Ok(self.total_steps - (p * self.total_steps as f64).round() as usize)
    }

    /// Start level for image-to-image work: `round(strength·N)`.
    pub fn strength_level(&self, strength: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&strength) {
            return Err(Error::Range(format!("strength {strength} outside [0, 1]")));
        }
        Ok((strength * self.total_steps as f64).round() as usize)
    }

    /// `ᾱ` at a noise level; 1 at level 0.
    pub fn alpha_bar(&self, level: usize, table: &[f64]) -> f64 {
        self.timestep(level).map_or(1.0, |t| table[t])
    }
}
