//! Temporal smoothness from spatio-temporal (X-T) slices.
//!
//! A slice stacks one image row over time. Moving content draws oriented
//! streaks in it; steady motion keeps the dominant streak direction steady.
//! Per time row we sum the Sobel edge directions (folded to point forward in
//! time, weighted by magnitude), unwrap the resulting angle sequence, and
//! take the population std of its second difference as the roughness.
//! Smoothness is `e^(−roughness)`, at most 1.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{ImageField, Lattice};

/// Slices are cut to this many frames.
pub const MAX_SLICE_FRAMES: usize = 16;

/// Gradients weaker than this do not vote.
pub const MIN_MAGNITUDE: f64 = 1e-6;

/// Rows scored when none are given.
pub const DEFAULT_ROWS: usize = 5;

/// Grayscale `T×W` slab, time down the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct XTSlice {
    time: usize,
    width: usize,
    data: Vec<f64>,
}

impl XTSlice {
    pub fn new(time: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if time < 3 {
            return Err(Error::TooFew {
                needed: 3,
                got: time,
            });
        }
        if width == 0 || data.len() != time * width {
            return Err(Error::mismatch(time * width, data.len()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Range("slice holds non-finite values".into()));
        }
        Ok(Self { time, width, data })
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, t: usize, x: usize) -> f64 {
        self.data[t * self.width + x]
    }

    /// Same slice with its time rows reordered: row `i` of the result is row
    /// `order[i]` of `self`.
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.time || order.iter().any(|&i| i >= self.time) {
            return Err(Error::Range("row order is not a permutation".into()));
        }
        let data = order
            .iter()
            .flat_map(|&t| {
                self.data[t * self.width..(t + 1) * self.width]
                    .iter()
                    .copied()
            })
            .collect();
        Self::new(self.time, self.width, data)
    }
}

/// Rec.601 luma.
pub fn luma(rgb: [f32; 3]) -> f64 {
    0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64
}

/// `n` evenly spaced rows, at the centres of `n` equal bands.
pub fn default_rows(height: usize, n: usize) -> Vec<usize> {
    (0..n)
        .map(|i| (((i as f64 + 0.5) * height as f64 / n as f64).round() as usize).min(height - 1))
        .collect()
}

/// Stack each requested row's luma over time, earliest frame first.
/// Frames past [`MAX_SLICE_FRAMES`] are dropped.
pub fn extract_slices(frames: &[ImageField], rows: &[usize]) -> Result<Vec<XTSlice>> {
    if frames.len() < 3 {
        return Err(Error::TooFew {
            needed: 3,
            got: frames.len(),
        });
    }
    let (h, w) = (frames[0].height(), frames[0].width());
    if let Some(f) = frames.iter().find(|f| (f.height(), f.width()) != (h, w)) {
        return Err(Error::mismatch((h, w), (f.height(), f.width())));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= h) {
        return Err(Error::Range(format!("row {r} outside 0..{h}")));
    }
    if frames.len() > MAX_SLICE_FRAMES {
        log::info!(
            "scoring the first {MAX_SLICE_FRAMES} of {} frames",
            frames.len()
        );
    }
    let frames = &frames[..frames.len().min(MAX_SLICE_FRAMES)];
    rows.iter()
        .map(|&r| {
            let data = frames
                .iter()
                .flat_map(|f| (0..w).map(move |x| luma(f.pixel(r, x))))
                .collect();
            XTSlice::new(frames.len(), w, data)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceScore {
    pub roughness: f64,
    pub smoothness: f64,
}

/// Sobel gradient `(g_time, g_space)` with replicate padding.
fn sobel(s: &XTSlice, t: usize, x: usize) -> (f64, f64) {
    let (tt, ww) = (s.time as isize, s.width as isize);
    let px = |dt: isize, dx: isize| {
        let t = (t as isize + dt).clamp(0, tt - 1) as usize;
        let x = (x as isize + dx).clamp(0, ww - 1) as usize;
        s.at(t, x)
    };
    let mut gt = 0.0;
    let mut gx = 0.0;
    for (k, wgt) in [(-1isize, 1.0), (0, 2.0), (1, 1.0)] {
        gt += wgt * (px(1, k) - px(-1, k));
        gx += wgt * (px(k, 1) - px(k, -1));
    }
    (gt, gx)
}

/// Magnitude-weighted sum of forward-folded edge directions of time row
/// `t`, as `(time, space)` components.
fn row_vote(s: &XTSlice, t: usize) -> (f64, f64) {
    let mut acc = (0.0, 0.0);
    for x in 0..s.width {
        let (gt, gx) = sobel(s, t, x);
        if gx == 0.0 || gt.hypot(gx) < MIN_MAGNITUDE {
            // edge runs along space only: no forward-time member
            continue;
        }
        // edge ⟂ gradient; pick the member with positive time component
        let (time, space) = if gx > 0.0 { (gx, -gt) } else { (-gx, gt) };
        acc.0 += time;
        acc.1 += space;
    }
    acc
}

fn unwrap(phases: &mut [f64]) {
    use std::f64::consts::{PI, TAU};
    for i in 1..phases.len() {
        let mut d = phases[i] - phases[i - 1];
        while d > PI {
            d -= TAU;
        }
        while d < -PI {
            d += TAU;
        }
        phases[i] = phases[i - 1] + d;
    }
}

/// Roughness and smoothness of one slice.
///
/// Directions are taken on the interior time rows `1..T−1` only, where the
/// Sobel stencil sees real neighbours in time, so at least 5 rows are
/// needed for one second difference.
pub fn slice_smoothness(s: &XTSlice) -> Result<SliceScore> {
    if s.time < 5 {
        return Err(Error::TooFew {
            needed: 5,
            got: s.time,
        });
    }
    let mut any = false;
    let mut last = 0.0;
    let mut phases = Vec::with_capacity(s.time - 2);
    for t in 1..s.time - 1 {
        let (time, space) = row_vote(s, t);
        if time != 0.0 || space != 0.0 {
            any = true;
            last = space.atan2(time);
        }
        phases.push(last);
    }
    if !any {
        return Err(Error::DegenerateSlice);
    }
    unwrap(&mut phases);
    let second: Vec<f64> = phases
        .windows(3)
        .map(|p| p[2] - 2.0 * p[1] + p[0])
        .collect();
    let n = second.len() as f64;
    let mean = second.iter().sum::<f64>() / n;
    let var = second.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let roughness = var.sqrt();
    Ok(SliceScore {
        roughness,
        smoothness: (-roughness).exp(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceReport {
    pub row: usize,
    /// `None` when the slice had no usable edges.
    pub score: Option<SliceScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmoothnessReport {
    pub frames_used: usize,
    pub slices: Vec<SliceReport>,
    /// Mean over non-degenerate slices.
    pub mean_smoothness: f64,
}

/// Score a video on `rows` (default: [`DEFAULT_ROWS`] evenly spaced rows).
/// Degenerate slices are skipped with a warning and flagged in the report.
pub fn video_smoothness(frames: &[ImageField], rows: Option<&[usize]>) -> Result<SmoothnessReport> {
    let height = frames.first().map_or(0, |f| f.height());
    let rows = rows.map_or_else(|| default_rows(height, DEFAULT_ROWS), <[usize]>::to_vec);
    let slices = extract_slices(frames, &rows)?;
    let mut reports = Vec::with_capacity(slices.len());
    for (row, s) in rows.iter().zip(&slices) {
        let score = match slice_smoothness(s) {
            Ok(score) => Some(score),
            Err(Error::DegenerateSlice) => {
                log::warn!("row {row}: no usable edges, skipped");
                None
            }
            Err(e) => return Err(e),
        };
        reports.push(SliceReport { row: *row, score });
    }
    let scored: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.score.map(|s| s.smoothness))
        .collect();
    if scored.is_empty() {
        return Err(Error::DegenerateSlice);
    }
    Ok(SmoothnessReport {
        frames_used: slices[0].time(),
        mean_smoothness: scored.iter().sum::<f64>() / scored.len() as f64,
        slices: reports,
    })
}

/// Slices stacked top to bottom, separated by one black row, as an 8-bit
/// gray image (values clamped to 0–255).
pub fn slice_montage(slices: &[XTSlice]) -> Result<ImageField> {
    let first = slices.first().ok_or(Error::TooFew { needed: 1, got: 0 })?;
    let w = first.width();
    if slices.iter().any(|s| s.width() != w) {
        return Err(Error::InvalidShape("slices differ in width".into()));
    }
    let mut rows: Vec<Option<(&XTSlice, usize)>> = vec![];
    for (i, s) in slices.iter().enumerate() {
        if i > 0 {
            rows.push(None);
        }
        rows.extend((0..s.time()).map(|t| Some((s, t))));
    }
    ImageField::from_fn(rows.len(), w, |y, x| match rows[y] {
        Some((s, t)) => [s.at(t, x).clamp(0.0, 255.0) as f32; 3],
        None => [0.0; 3],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::GaussianStream;
    use std::f64::consts::FRAC_PI_2;

    /// Smooth compact bumps; `offset` shifts the pattern right.
    fn bumps(width: usize, offset: f64) -> Vec<f64> {
        (0..width)
            .map(|x| {
                [20.0, 45.0, 70.0]
                    .iter()
                    .map(|&c| {
                        let d = (x as f64 - c - offset) / 6.0;
                        if d.abs() < 1.0 {
                            100.0 * (1.0 - d * d).powi(2)
                        } else {
                            0.0
                        }
                    })
                    .sum()
            })
            .collect()
    }

    fn moving(time: usize, width: usize, velocity: impl Fn(usize) -> f64) -> XTSlice {
        let mut pos = 0.0;
        let mut data = vec![];
        for t in 0..time {
            if t > 0 {
                pos += velocity(t);
            }
            data.extend(bumps(width, pos));
        }
        XTSlice::new(time, width, data).unwrap()
    }

    /// Straight-line reimplementation: gradient angle rotated by ±π/2 into
    /// the forward half-plane, then complex summation by angle.
    fn oracle(s: &XTSlice) -> f64 {
        let (t_len, w) = (s.time() as i64, s.width() as i64);
        let v = |t: i64, x: i64| s.at(t.clamp(0, t_len - 1) as usize, x.clamp(0, w - 1) as usize);
        let mut phi = vec![];
        let mut prev = 0.0;
        for t in 1..t_len - 1 {
            let (mut re, mut im) = (0.0, 0.0);
            for x in 0..w {
                let gt = (v(t + 1, x - 1) + 2.0 * v(t + 1, x) + v(t + 1, x + 1))
                    - (v(t - 1, x - 1) + 2.0 * v(t - 1, x) + v(t - 1, x + 1));
                let gx = (v(t - 1, x + 1) + 2.0 * v(t, x + 1) + v(t + 1, x + 1))
                    - (v(t - 1, x - 1) + 2.0 * v(t, x - 1) + v(t + 1, x - 1));
                let r = (gt * gt + gx * gx).sqrt();
                if r < 1e-6 {
                    continue;
                }
                // gradient angle from the time axis, edge is a quarter turn off
                let g = gx.atan2(gt);
                let mut theta = g + FRAC_PI_2;
                if theta > FRAC_PI_2 {
                    theta -= std::f64::consts::PI;
                }
                if theta <= -FRAC_PI_2 || theta >= FRAC_PI_2 || gx == 0.0 {
                    continue;
                }
                re += r * theta.cos();
                im += r * theta.sin();
            }
            if re != 0.0 || im != 0.0 {
                prev = im.atan2(re);
            }
            phi.push(prev);
        }
        for i in 1..phi.len() {
            while phi[i] - phi[i - 1] > std::f64::consts::PI {
                phi[i] -= std::f64::consts::TAU;
            }
            while phi[i] - phi[i - 1] < -std::f64::consts::PI {
                phi[i] += std::f64::consts::TAU;
            }
        }
        let d2: Vec<f64> = (1..phi.len() - 1)
            .map(|i| phi[i + 1] - 2.0 * phi[i] + phi[i - 1])
            .collect();
        let m = d2.iter().sum::<f64>() / d2.len() as f64;
        (d2.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / d2.len() as f64).sqrt()
    }

    #[test]
    fn constant_velocity_is_perfectly_smooth() {
        let s = moving(16, 128, |_| 2.0);
        let score = slice_smoothness(&s).unwrap();
        assert_eq!(score.roughness, 0.0);
        assert_eq!(score.smoothness, 1.0);
    }

    #[test]
    fn static_video_is_smooth() {
        let s = moving(8, 128, |_| 0.0);
        assert_eq!(slice_smoothness(&s).unwrap().smoothness, 1.0);
    }

    #[test]
    fn shuffling_time_lowers_smoothness() {
        let s = moving(16, 128, |_| 2.0);
        let order = [3, 11, 0, 7, 14, 2, 9, 5, 15, 1, 12, 6, 10, 4, 13, 8];
        let shuffled = s.permute_rows(&order).unwrap();
        assert!(
            slice_smoothness(&shuffled).unwrap().smoothness
                < slice_smoothness(&s).unwrap().smoothness
        );
    }

    #[test]
    fn alternating_motion_matches_oracle() {
        // rows t−1 and t+1 coincide, so the time stencil sees a still
        // scene: both implementations must agree on roughness 0
        let s = moving(16, 128, |t| if t % 2 == 0 { 2.0 } else { -2.0 });
        let got = slice_smoothness(&s).unwrap().roughness;
        assert!((got - oracle(&s)).abs() < 1e-6);

        let jerky = moving(16, 128, |t| [0.0, 3.0, 1.0, 4.0][t % 4]);
        let got = slice_smoothness(&jerky).unwrap().roughness;
        assert!(got > 0.01);
        assert!((got - oracle(&jerky)).abs() < 1e-6);
    }

    #[test]
    fn random_slices_match_oracle() {
        let mut g = GaussianStream::new(18);
        for _ in 0..100 {
            let data = (0..9 * 24)
                .map(|_| 128.0 + 40.0 * g.next_normal())
                .collect();
            let s = XTSlice::new(9, 24, data).unwrap();
            let got = slice_smoothness(&s).unwrap().roughness;
            assert!((got - oracle(&s)).abs() < 1e-6, "{got} vs {}", oracle(&s));
        }
    }

    #[test]
    fn contrast_and_mirror_invariance() {
        let s = moving(12, 96, |t| (t % 3) as f64);
        let base = slice_smoothness(&s).unwrap().roughness;
        let scaled =
            XTSlice::new(12, 96, s.data().iter().map(|v| 3.5 * v + 20.0).collect()).unwrap();
        assert!((slice_smoothness(&scaled).unwrap().roughness - base).abs() < 1e-9);
        let mirrored: Vec<f64> = (0..12)
            .flat_map(|t| (0..96).rev().map(move |x| (t, x)))
            .map(|(t, x)| s.at(t, x))
            .collect();
        let mirrored = XTSlice::new(12, 96, mirrored).unwrap();
        assert!((slice_smoothness(&mirrored).unwrap().roughness - base).abs() < 1e-9);
    }

    #[test]
    fn flat_slice_is_degenerate() {
        let s = XTSlice::new(6, 10, vec![7.0; 60]).unwrap();
        assert!(matches!(slice_smoothness(&s), Err(Error::DegenerateSlice)));
    }

    #[test]
    fn size_rules() {
        assert!(matches!(
            XTSlice::new(2, 4, vec![0.0; 8]),
            Err(Error::TooFew { .. })
        ));
        let s = XTSlice::new(4, 4, vec![0.0; 16]).unwrap();
        assert!(matches!(
            slice_smoothness(&s),
            Err(Error::TooFew { needed: 5, .. })
        ));
        let f = ImageField::filled(4, 4, [1.0; 3]).unwrap();
        assert!(matches!(
            extract_slices(&[f.clone(), f.clone()], &[0]),
            Err(Error::TooFew { .. })
        ));
        assert!(matches!(
            extract_slices(&[f.clone(), f.clone(), f], &[4]),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn extraction() {
        let frames: Vec<ImageField> = (0..20)
            .map(|t| ImageField::from_fn(4, 8, |_, x| [((x + t) % 8) as f32 * 10.0; 3]).unwrap())
            .collect();
        let slices = extract_slices(&frames, &[1, 3]).unwrap();
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].time(), 16);
        assert_eq!(slices[0].at(2, 0), luma([20.0; 3]));
        // identical frames give identical rows
        let same = vec![frames[0].clone(); 4];
        let s = &extract_slices(&same, &[0]).unwrap()[0];
        assert_eq!(&s.data()[..8], &s.data()[8..16]);
        assert_eq!(default_rows(100, 5), vec![10, 30, 50, 70, 90]);
    }

    #[test]
    fn report_over_identical_rows() {
        let frames: Vec<ImageField> = (0..10)
            .map(|t| {
                let row = bumps(96, 2.0 * t as f64);
                ImageField::from_fn(20, 96, |_, x| [row[x] as f32; 3]).unwrap()
            })
            .collect();
        let report = video_smoothness(&frames, None).unwrap();
        assert_eq!(report.slices.len(), 5);
        let first = report.slices[0].score.unwrap().smoothness;
        assert!((report.mean_smoothness - first).abs() < 1e-12);
        let montage = slice_montage(&extract_slices(&frames, &[0, 1]).unwrap()).unwrap();
        assert_eq!(montage.height(), 21);
    }
}
