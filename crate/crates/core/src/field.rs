//! Field types shared by every module.
//!
//! A [`LatentField`] is stored channel-major (`C×H×W`), an [`ImageField`]
//! interleaved (`H×W×3`). Both expose their layout through the [`Lattice`]
//! trait so that the crystal transforms can be written once.

use crate::error::{Error, Result};

/// Spatial factor between the latent grid and image pixels.
pub const VAE_SCALE: usize = 8;

/// Number of channels in a latent.
pub const LATENT_CHANNELS: usize = 4;

/// Read/write access to a 3-axis grid of `f32` values.
pub trait Lattice: Clone {
    fn channels(&self) -> usize;
    fn height(&self) -> usize;
    fn width(&self) -> usize;
    /// Flat index of `(channel, row, column)`.
    fn offset(&self, c: usize, y: usize, x: usize) -> usize;
    fn values(&self) -> &[f32];
    fn values_mut(&mut self) -> &mut [f32];

    fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.values()[self.offset(c, y, x)]
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.channels(), self.height(), self.width())
    }

    /// Values of one channel in row-major order.
    fn channel_values(&self, c: usize) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.height() * self.width());
        for y in 0..self.height() {
            for x in 0..self.width() {
                out.push(self.get(c, y, x));
            }
        }
        out
    }
}

fn check_dims(c: usize, h: usize, w: usize, len: usize) -> Result<()> {
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidShape(format!("{c}x{h}x{w} has a zero axis")));
    }
    if c * h * w != len {
        return Err(Error::mismatch(c * h * w, len));
    }
    Ok(())
}

/// Multi-channel field on the latent grid, `C×H×W`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentField {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl LatentField {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(channels, height, width, data.len())?;
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            vec![0.0; channels * height * width],
        )
    }

    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(channels * height * width);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self::new(channels, height, width, data)
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        max_abs_diff(&self.data, &other.data)
    }
}

impl Lattice for LatentField {
    fn channels(&self) -> usize {
        self.channels
    }
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    #[inline]
    fn offset(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }
    fn values(&self) -> &[f32] {
        &self.data
    }
    fn values_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// RGB image, `H×W×3` interleaved, nominal range `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageField {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(3, height, width, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [f32; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::new(height, width, data)
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.height, self.width, 3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Values clamped to `[0, 255]` and rounded to bytes.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| v.clamp(0.0, 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, bytes.iter().map(|&b| b as f32).collect())
    }

    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> ImageField {
        ImageField {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Average each `factor × factor` block.
    pub fn box_downscale(&self, factor: usize) -> Result<ImageField> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor)
        {
            return Err(Error::InvalidShape(format!(
                "{}x{} image is not divisible by {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let norm = 1.0 / (factor * factor) as f64;
        ImageField::from_fn(h, w, |y, x| {
            let mut acc = [0.0f64; 3];
            for dy in 0..factor {
                for dx in 0..factor {
                    let p = self.pixel(y * factor + dy, x * factor + dx);
                    for c in 0..3 {
                        acc[c] += p[c] as f64;
                    }
                }
            }
            acc.map(|v| (v * norm) as f32)
        })
    }

    /// Repeat each pixel into a `factor × factor` block.
    pub fn upscale_nearest(&self, factor: usize) -> ImageField {
        let (h, w) = (self.height * factor, self.width * factor);
        ImageField::from_fn(h, w, |y, x| self.pixel(y / factor, x / factor))
            .expect("non-empty image stays non-empty")
    }

    pub fn max_abs_diff(&self, other: &Self) -> f32 {
        max_abs_diff(&self.data, &other.data)
    }

    pub fn mean_abs_diff(&self, other: &Self) -> f64 {
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs() as f64)
            .sum();
        sum / self.data.len() as f64
    }
}

impl Lattice for ImageField {
    fn channels(&self) -> usize {
        3
    }
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    #[inline]
    fn offset(&self, c: usize, y: usize, x: usize) -> usize {
        (y * self.width + x) * 3 + c
    }
    fn values(&self) -> &[f32] {
        &self.data
    }
    fn values_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Single-channel real plane, `H×W` row-major. Used for alpha mattes.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(1, height, width, data.len())?;
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, v: f32) -> Result<Self> {
        Self::new(height, width, vec![v; height * width])
    }

    pub fn at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

impl Lattice for Plane {
    fn channels(&self) -> usize {
        1
    }
    fn height(&self) -> usize {
        self.height
    }
    fn width(&self) -> usize {
        self.width
    }
    #[inline]
    fn offset(&self, _c: usize, y: usize, x: usize) -> usize {
        y * self.width + x
    }
    fn values(&self) -> &[f32] {
        &self.data
    }
    fn values_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// Binary mask, `H×W` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(1, height, width, bits.len())?;
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let bits = (0..height * width)
            .map(|i| f(i / width, i % width))
            .collect();
        Self::new(height, width, bits)
    }

    /// Threshold an 8-bit grayscale buffer at 128.
    pub fn from_gray8(height: usize, width: usize, gray: &[u8]) -> Result<Self> {
        Self::new(height, width, gray.iter().map(|&g| g >= 128).collect())
    }

    pub fn at(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Nearest-neighbour enlargement by an integer factor.
    pub fn upscale(&self, factor: usize) -> Mask {
        let (h, w) = (self.height * factor, self.width * factor);
        let bits = (0..h * w)
            .map(|i| self.at(i / w / factor, i % w / factor))
            .collect();
        Mask {
            height: h,
            width: w,
            bits,
        }
    }

    /// Block-reduce by an integer factor; a latent cell is set when the
    /// majority of its image block is set.
    pub fn downscale(&self, factor: usize) -> Result<Mask> {
        if factor == 0 || !self.height.is_multiple_of(factor) || !self.width.is_multiple_of(factor)
        {
            return Err(Error::InvalidShape(format!(
                "{}x{} mask is not divisible by {factor}",
                self.height, self.width
            )));
        }
        let (h, w) = (self.height / factor, self.width / factor);
        Mask::from_fn(h, w, |y, x| {
            let mut set = 0;
            for dy in 0..factor {
                for dx in 0..factor {
                    set += self.at(y * factor + dy, x * factor + dx) as usize;
                }
            }
            2 * set >= factor * factor
        })
    }
}

pub(crate) fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len(), "max_abs_diff on fields of different size");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f32::max)
}
