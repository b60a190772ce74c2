//! Per-channel mean / population standard deviation.

use serde::{Deserialize, Serialize};

use crate::field::Lattice;

/// Floor applied to a channel whose variance is zero.
pub const STD_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Set when at least one channel's std was clamped to [`STD_EPSILON`].
    #[serde(default)]
    pub clamped: bool,
}

impl ChannelStats {
    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    /// Largest absolute difference over all means and stds.
    pub fn max_abs_diff(&self, other: &ChannelStats) -> f64 {
        self.mean
            .iter()
            .zip(&other.mean)
            .chain(self.std.iter().zip(&other.std))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Mean and std of one channel, accumulated in `f64`.
pub(crate) fn moments<L: Lattice>(x: &L, c: usize) -> (f64, f64) {
    let n = (x.height() * x.width()) as f64;
    let mut sum = 0.0;
    for y in 0..x.height() {
        for col in 0..x.width() {
            sum += x.get(c, y, col) as f64;
        }
    }
    let mean = sum / n;
    let mut ss = 0.0;
    for y in 0..x.height() {
        for col in 0..x.width() {
            let d = x.get(c, y, col) as f64 - mean;
            ss += d * d;
        }
    }
    (mean, (ss / n).sqrt())
}

/// Channel-wise arithmetic mean and population std.
///
/// A zero-variance channel reports `STD_EPSILON` and raises `clamped`.
pub fn measure_stats<L: Lattice>(x: &L) -> ChannelStats {
    let mut stats = ChannelStats {
        mean: Vec::with_capacity(x.channels()),
        std: Vec::with_capacity(x.channels()),
        clamped: false,
    };
    for c in 0..x.channels() {
        let (mean, std) = moments(x, c);
        stats.mean.push(mean);
        if std > STD_EPSILON {
            stats.std.push(std);
        } else {
            log::warn!("channel {c} has zero variance; std clamped to {STD_EPSILON:e}");
            stats.std.push(STD_EPSILON);
            stats.clamped = true;
        }
    }
    stats
}
