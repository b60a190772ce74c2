//! Flow maps: per-pixel motion laws encoded in an RGB image.
//!
//! Encoding (HSV of each pixel):
//! - hue: direction, 0 = rightward, increasing counterclockwise on screen
//!   (so 90° moves up and 180°, cyan, moves left);
//! - saturation: fraction of the maximum magnitude;
//! - value: at or above the white threshold the pixel moves at constant
//!   velocity (`saturation · max_velocity` px/frame); below it the pixel
//!   sways sinusoidally with amplitude `saturation · max_amplitude` and
//!   period `period_min + value · (period_max − period_min)` frames.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ImageField;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionPrimitive {
    /// Radians, 0 = rightward, counterclockwise on screen.
    pub direction: f64,
    /// Pixels (per frame for constant velocity).
    pub amplitude: f64,
    /// Frames; `f64::INFINITY` selects constant velocity.
    pub period: f64,
    pub phase: f64,
}

impl MotionPrimitive {
    pub const STILL: MotionPrimitive = MotionPrimitive {
        direction: 0.0,
        amplitude: 0.0,
        period: f64::INFINITY,
        phase: 0.0,
    };

    pub fn constant(direction: f64, velocity: f64) -> Self {
        Self {
            direction,
            amplitude: velocity,
            period: f64::INFINITY,
            phase: 0.0,
        }
    }

    pub fn periodic(direction: f64, amplitude: f64, period: f64, phase: f64) -> Self {
        Self {
            direction,
            amplitude,
            period,
            phase,
        }
    }

    /// Displacement in image coordinates (`+x` right, `+y` down) at frame `t`.
    pub fn displacement(&self, t: f64) -> (f64, f64) {
        let magnitude = if self.period.is_infinite() {
            t * self.amplitude
        } else {
            self.amplitude * (TAU * t / self.period + self.phase).sin()
        };
        (
            magnitude * self.direction.cos(),
            -magnitude * self.direction.sin(),
        )
    }
}

/// Calibration constants for turning a flow-map image into motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCalibration {
    /// Image px per frame at full saturation for constant-velocity pixels.
    pub max_velocity: f64,
    /// Image px at full saturation for swaying pixels.
    pub max_amplitude: f64,
    pub period_min: f64,
    pub period_max: f64,
    #[serde(default = "default_white")]
    pub white_threshold: f64,
}

fn default_white() -> f64 {
    0.95
}

impl Default for FlowCalibration {
    fn default() -> Self {
        Self {
            max_velocity: 8.0,
            max_amplitude: 8.0,
            period_min: 8.0,
            period_max: 32.0,
            white_threshold: default_white(),
        }
    }
}

impl FlowCalibration {
    fn validate(&self) -> Result<()> {
        let positive = [
            self.max_velocity,
            self.max_amplitude,
            self.period_min,
            self.period_max,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !positive || self.period_max < self.period_min {
            return Err(Error::Range(format!("bad flow calibration {self:?}")));
        }
        if !(self.white_threshold > 0.0 && self.white_threshold <= 1.0) {
            return Err(Error::Range(format!(
                "white threshold {} outside (0, 1]",
                self.white_threshold
            )));
        }
        Ok(())
    }
}

/// Motion law for every image pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub height: usize,
    pub width: usize,
    pub motion: Vec<MotionPrimitive>,
    pub wrap_x: bool,
    pub wrap_y: bool,
}

impl FlowField {
    pub fn uniform(height: usize, width: usize, m: MotionPrimitive) -> Self {
        Self {
            height,
            width,
            motion: vec![m; height * width],
            wrap_x: true,
            wrap_y: true,
        }
    }

    pub fn still(height: usize, width: usize) -> Self {
        Self::uniform(height, width, MotionPrimitive::STILL)
    }

    pub fn with_wrap(mut self, wrap_x: bool, wrap_y: bool) -> Self {
        self.wrap_x = wrap_x;
        self.wrap_y = wrap_y;
        self
    }

    pub fn at(&self, y: usize, x: usize) -> &MotionPrimitive {
        &self.motion[y * self.width + x]
    }
}

/// Dense per-pixel displacement in image px.
#[derive(Debug, Clone, PartialEq)]
pub struct Displacement {
    pub height: usize,
    pub width: usize,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl Displacement {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::uniform(height, width, 0.0, 0.0)
    }

    pub fn uniform(height: usize, width: usize, dx: f32, dy: f32) -> Self {
        Self {
            height,
            width,
            dx: vec![dx; height * width],
            dy: vec![dy; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> (f32, f32)) -> Self {
        let (dx, dy) = (0..height * width).map(|i| f(i / width, i % width)).unzip();
        Self {
            height,
            width,
            dx,
            dy,
        }
    }

    pub fn at(&self, y: usize, x: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }
}

/// Evaluate the flow's motion laws at frame `t`.
pub fn displacement_at(flow: &FlowField, t: f64) -> Displacement {
    let (dx, dy) = flow
        .motion
        .iter()
        .map(|m| {
            let (dx, dy) = m.displacement(t);
            (dx as f32, dy as f32)
        })
        .unzip();
    Displacement {
        height: flow.height,
        width: flow.width,
        dx,
        dy,
    }
}

/// `(hue radians in [0, 2π), saturation, value)` of an RGB triple in `[0, 255]`.
pub fn rgb_to_hsv(rgb: [f32; 3]) -> (f64, f64, f64) {
    let [r, g, b] = rgb.map(|v| (v as f64 / 255.0).clamp(0.0, 1.0));
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let chroma = max - min;
    let saturation = if max > 0.0 { chroma / max } else { 0.0 };
    if chroma == 0.0 {
        return (0.0, saturation, max);
    }
    let sector = if max == r {
        ((g - b) / chroma).rem_euclid(6.0)
    } else if max == g {
        (b - r) / chroma + 2.0
    } else {
        (r - g) / chroma + 4.0
    };
    ((sector * PI / 3.0).rem_euclid(TAU), saturation, max)
}

/// Inverse of [`rgb_to_hsv`], returning values in `[0, 255]`.
pub fn hsv_to_rgb(hue: f64, saturation: f64, value: f64) -> [f32; 3] {
    let chroma = value * saturation;
    let sector = hue.rem_euclid(TAU) / (PI / 3.0);
    let x = chroma * (1.0 - (sector.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match sector as u32 {
        0 => (chroma, x, 0.0),
        1 => (x, chroma, 0.0),
        2 => (0.0, chroma, x),
        3 => (0.0, x, chroma),
        4 => (x, 0.0, chroma),
        _ => (chroma, 0.0, x),
    };
    let m = value - chroma;
    [r, g, b].map(|c| ((c + m) * 255.0) as f32)
}

/// Decode a flow-map image into per-pixel motion laws.
pub fn parse_flow_map(img: &ImageField, cal: &FlowCalibration) -> Result<FlowField> {
    cal.validate()?;
    let [h, w, _] = img.shape();
    let mut motion = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (hue, sat, val) = rgb_to_hsv(img.pixel(y, x));
            motion.push(if val >= cal.white_threshold {
                MotionPrimitive::constant(hue, sat * cal.max_velocity)
            } else {
                MotionPrimitive::periodic(
                    hue,
                    sat * cal.max_amplitude,
                    cal.period_min + val * (cal.period_max - cal.period_min),
                    0.0,
                )
            });
        }
    }
    Ok(FlowField {
        height: h,
        width: w,
        motion,
        wrap_x: true,
        wrap_y: true,
    })
}

/// Decode raw interleaved 8-bit pixels; anything but 3 channels is refused.
pub fn parse_flow_map_raw(
    height: usize,
    width: usize,
    channels: usize,
    bytes: &[u8],
    cal: &FlowCalibration,
) -> Result<FlowField> {
    if channels != 3 {
        return Err(Error::Format(format!(
            "flow map must be RGB, got {channels} channels"
        )));
    }
    parse_flow_map(&ImageField::from_rgb8(height, width, bytes)?, cal)
}

/// Encode motion laws as a flow-map image (exact `f32`, not yet quantised).
///
/// Periodic primitives must have a period whose value lands below the
/// white threshold, otherwise they would decode as constant velocity.
pub fn render_flow_map(flow: &FlowField, cal: &FlowCalibration) -> Result<ImageField> {
    cal.validate()?;
    let mut img = ImageField::filled(flow.height, flow.width, [0.0; 3])?;
    for y in 0..flow.height {
        for x in 0..flow.width {
            let m = flow.at(y, x);
            let (sat, val) = if m.period.is_infinite() {
                (m.amplitude / cal.max_velocity, 1.0)
            } else {
                let span = cal.period_max - cal.period_min;
                let val = if span > 0.0 {
                    (m.period - cal.period_min) / span
                } else {
                    0.0
                };
                if val >= cal.white_threshold || val < 0.0 {
                    return Err(Error::Range(format!(
                        "period {} at ({y},{x}) is not encodable",
                        m.period
                    )));
                }
                (m.amplitude / cal.max_amplitude, val)
            };
            if !(0.0..=1.0).contains(&sat) {
                return Err(Error::Range(format!(
                    "magnitude {} at ({y},{x}) exceeds calibration",
                    m.amplitude
                )));
            }
            img.set_pixel(y, x, hsv_to_rgb(m.direction, sat, val));
        }
    }
    Ok(img)
}
