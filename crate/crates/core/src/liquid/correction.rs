//! Statistical corrections around the autoencoder round trip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{LatentField, Lattice};
use crate::noise::GaussianStream;
use crate::stats::{measure_stats, moments, ChannelStats, STD_EPSILON};

/// Pre-decode variance reduction. The per-channel scale is
/// `max(floor, 1 − beta · (1 − switch_fraction))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceReductionSpec {
    pub switch_fraction: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_floor")]
    pub floor: f64,
}

fn default_beta() -> f64 {
    0.5
}

fn default_floor() -> f64 {
    0.7
}

impl VarianceReductionSpec {
    pub fn new(switch_fraction: f64) -> Self {
        Self {
            switch_fraction,
            beta: default_beta(),
            floor: default_floor(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.floor
            .max(1.0 - self.beta * (1.0 - self.switch_fraction))
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.switch_fraction)
            || !(self.beta >= 0.0)
            || !(self.floor > 0.0 && self.floor <= 1.0)
        {
            return Err(Error::Range(format!("bad variance reduction {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KurtosisSpec {
    pub delta: f64,
    #[serde(default)]
    pub enabled: bool,
}

impl Default for KurtosisSpec {
    fn default() -> Self {
        Self {
            delta: 1.0,
            enabled: false,
        }
    }
}

fn rescale_channels(x: &LatentField, f: impl Fn(usize, f64) -> f64) -> LatentField {
    let mut out = x.clone();
    for c in 0..x.channels() {
        for v in out.channel_mut(c) {
            *v = f(c, *v as f64) as f32;
        }
    }
    out
}

/// Record the channel statistics, then shrink each channel about its mean.
pub fn reduce_variance(
    x: &LatentField,
    spec: &VarianceReductionSpec,
) -> Result<(LatentField, ChannelStats)> {
    spec.validate()?;
    let stats = measure_stats(x);
    let k = spec.scale();
    if k == 1.0 {
        return Ok((x.clone(), stats));
    }
    let reduced = rescale_channels(x, |c, v| stats.mean[c] + k * (v - stats.mean[c]));
    Ok((reduced, stats))
}

/// Match each channel to `target`: rescale about the current mean to the
/// target std first, then shift to the target mean.
pub fn match_stats(x: &LatentField, target: &ChannelStats) -> Result<LatentField> {
    if target.channels() != x.channels() {
        return Err(Error::mismatch(x.channels(), target.channels()));
    }
    if let Some(c) = target.std.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::Range(format!(
            "target std of channel {c} is not positive"
        )));
    }
    let current: Vec<(f64, f64)> = (0..x.channels()).map(|c| moments(x, c)).collect();
    if let Some((c, &(_, std))) = current.iter().enumerate().find(|(_, m)| m.1 < STD_EPSILON) {
        return Err(Error::DegenerateChannel { channel: c, std });
    }
    Ok(rescale_channels(x, |c, v| {
        let (mean, std) = current[c];
        let rescaled = mean + (v - mean) * (target.std[c] / std);
        rescaled + (target.mean[c] - mean)
    }))
}

/// `x ↦ sinh(δ · asinh(x))` elementwise when enabled; δ > 1 fattens tails.
pub fn adjust_kurtosis(x: &LatentField, spec: &KurtosisSpec) -> Result<LatentField> {
    if !(spec.delta > 0.0) || !spec.delta.is_finite() {
        return Err(Error::Range(format!(
            "kurtosis delta {} must be > 0",
            spec.delta
        )));
    }
    if !spec.enabled {
        return Ok(x.clone());
    }
    let d = spec.delta;
    Ok(x.map(|v| libm::sinh(d * libm::asinh(v as f64)) as f32))
}

/// `x + strength · n` with `n` standard normal from `seed`, drawn in
/// storage order. Works on any lattice (latent or decoded image).
pub fn inject_noise<L: Lattice>(x: &L, seed: u64, strength: f64) -> Result<L> {
    if !(strength >= 0.0) || !strength.is_finite() {
        return Err(Error::Range(format!(
            "noise strength {strength} must be >= 0"
        )));
    }
    if strength == 0.0 {
        return Ok(x.clone());
    }
    let mut out = x.clone();
    let mut stream = GaussianStream::new(seed);
    for v in out.values_mut() {
        *v = (*v as f64 + strength * stream.next_normal()) as f32;
    }
    Ok(out)
}
