//! Lattice-confined transforms.
//!
//! Noise values live on the latent grid and only ever move by whole cells:
//! integer rolls, per-row glides (discretised shear) and masked mosaic
//! pasting. No value is ever produced by interpolation. All functions are
//! generic over [`Lattice`], so the same code moves latents and (at 8×
//! scale) segmentation maps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ImageField, Lattice, Mask, VAE_SCALE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LatticeShift {
    /// Cells, positive to the right.
    pub dx: i64,
    /// Cells, positive downwards.
    pub dy: i64,
    #[serde(default = "yes")]
    pub wrap_x: bool,
    #[serde(default = "yes")]
    pub wrap_y: bool,
}

fn yes() -> bool {
    true
}

impl LatticeShift {
    pub fn wrapped(dx: i64, dy: i64) -> Self {
        Self {
            dx,
            dy,
            wrap_x: true,
            wrap_y: true,
        }
    }

    fn scaled(&self, k: i64) -> Self {
        Self {
            dx: self.dx * k,
            dy: self.dy * k,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowShiftProfile {
    pub shifts: Vec<i64>,
    #[serde(default = "yes")]
    pub wrap: bool,
}

/// One mosaic piece: cells under `mask` (in source coordinates) are pasted
/// at `(x + dx, y + dy)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MosaicPiece {
    pub mask: Mask,
    pub dx: i64,
    pub dy: i64,
    pub wrap: bool,
}

/// Ordered pieces; a later piece overwrites an earlier one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegionMosaic {
    pub pieces: Vec<MosaicPiece>,
}

/// A single lattice operation.
#[derive(Debug, Clone, PartialEq)]
pub enum CrystalOp {
    Roll(LatticeShift),
    Glide(RowShiftProfile),
    /// Pieces are cut from the field as it enters this op.
    Mosaic(RegionMosaic),
}

/// Ordered list of lattice operations making up one frame's transform.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CrystalTransform {
    pub ops: Vec<CrystalOp>,
}

impl CrystalTransform {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn roll(shift: LatticeShift) -> Self {
        Self {
            ops: vec![CrystalOp::Roll(shift)],
        }
    }

    /// True when no op moves anything (zero rolls, zero glides, empty mosaics).
    pub fn is_identity(&self) -> bool {
        self.ops.iter().all(|op| match op {
            CrystalOp::Roll(s) => s.dx == 0 && s.dy == 0,
            CrystalOp::Glide(p) => p.shifts.iter().all(|&s| s == 0),
            CrystalOp::Mosaic(m) => m.pieces.is_empty(),
        })
    }

    fn needs_reservoir(&self) -> bool {
        self.ops.iter().any(|op| match op {
            CrystalOp::Roll(s) => (!s.wrap_x && s.dx != 0) || (!s.wrap_y && s.dy != 0),
            CrystalOp::Glide(p) => !p.wrap && p.shifts.iter().any(|&s| s != 0),
            CrystalOp::Mosaic(_) => false,
        })
    }
}

/// Source coordinate along one axis, or `None` if it falls off the lattice.
#[inline]
fn source_index(pos: usize, shift: i64, len: usize, wrap: bool) -> Option<usize> {
    let src = pos as i64 - shift;
    if wrap {
        Some(src.rem_euclid(len as i64) as usize)
    } else if (0..len as i64).contains(&src) {
        Some(src as usize)
    } else {
        None
    }
}

fn check_reservoir<L: Lattice>(x: &L, reservoir: Option<&L>) -> Result<()> {
    match reservoir {
        None => Err(Error::MissingReservoir),
        Some(r) if r.dims() != x.dims() => Err(Error::mismatch(x.dims(), r.dims())),
        Some(_) => Ok(()),
    }
}

/// Integer translation. With wrap off on an axis, vacated cells are taken
/// from `reservoir` at the same position.
pub fn roll<L: Lattice>(x: &L, s: &LatticeShift, reservoir: Option<&L>) -> Result<L> {
    let (c, h, w) = x.dims();
    if (!s.wrap_x && s.dx != 0) || (!s.wrap_y && s.dy != 0) {
        check_reservoir(x, reservoir)?;
    }
    let mut out = x.clone();
    for y in 0..h {
        let sy = source_index(y, s.dy, h, s.wrap_y);
        for col in 0..w {
            let sx = source_index(col, s.dx, w, s.wrap_x);
            for ch in 0..c {
                let v = match (sy, sx) {
                    (Some(sy), Some(sx)) => x.get(ch, sy, sx),
                    _ => reservoir.expect("checked above").get(ch, y, col),
                };
                let i = out.offset(ch, y, col);
                out.values_mut()[i] = v;
            }
        }
    }
    Ok(out)
}

/// Rounded division, ties away from zero.
fn div_round(num: i64, den: i64) -> i64 {
    debug_assert!(den > 0);
    let q = (2 * num.abs() + den) / (2 * den);
    if num < 0 {
        -q
    } else {
        q
    }
}

/// Per-row shifts for a shear about `horizon_row`: rows at or above the
/// horizon move by `far_shift`, the bottom row by `near_shift`, rows in
/// between follow the linear ramp rounded half away from zero.
pub fn discretize_shear(
    horizon_row: i64,
    near_shift: i64,
    far_shift: i64,
    height: usize,
) -> Result<RowShiftProfile> {
    if height == 0 || horizon_row < 0 || horizon_row >= height as i64 {
        return Err(Error::Range(format!(
            "horizon row {horizon_row} outside 0..{height}"
        )));
    }
    let last = height as i64 - 1;
    let span = last - horizon_row;
    let shifts = (0..height as i64)
        .map(|row| {
            if row <= horizon_row || span == 0 {
                far_shift
            } else {
                far_shift + div_round((near_shift - far_shift) * (row - horizon_row), span)
            }
        })
        .collect();
    Ok(RowShiftProfile { shifts, wrap: true })
}

/// Shift each row horizontally by its own amount; all channels move together.
pub fn glide<L: Lattice>(x: &L, p: &RowShiftProfile, reservoir: Option<&L>) -> Result<L> {
    let (c, h, w) = x.dims();
    if p.shifts.len() != h {
        return Err(Error::mismatch(h, p.shifts.len()));
    }
    if !p.wrap && p.shifts.iter().any(|&s| s != 0) {
        check_reservoir(x, reservoir)?;
    }
    let mut out = x.clone();
    for (y, &shift) in p.shifts.iter().enumerate() {
        for col in 0..w {
            let sx = source_index(col, shift, w, p.wrap);
            for ch in 0..c {
                let v = match sx {
                    Some(sx) => x.get(ch, y, sx),
                    None => reservoir.expect("checked above").get(ch, y, col),
                };
                let i = out.offset(ch, y, col);
                out.values_mut()[i] = v;
            }
        }
    }
    Ok(out)
}

/// Paste masked regions of `source` onto `base` at displaced positions.
pub fn mosaic<L: Lattice>(base: &L, source: &L, m: &RegionMosaic) -> Result<L> {
    let (c, h, w) = base.dims();
    if source.dims() != base.dims() {
        return Err(Error::mismatch(base.dims(), source.dims()));
    }
    for p in &m.pieces {
        if (p.mask.height, p.mask.width) != (h, w) {
            return Err(Error::mismatch((h, w), (p.mask.height, p.mask.width)));
        }
    }
    let mut out = base.clone();
    for (index, p) in m.pieces.iter().enumerate() {
        // Validate the whole piece before touching the output.
        let mut moves = Vec::new();
        for y in 0..h {
            for col in 0..w {
                if !p.mask.at(y, col) {
                    continue;
                }
                // Destination = source + displacement, i.e. source index of -shift.
                let ty = source_index(y, -p.dy, h, p.wrap);
                let tx = source_index(col, -p.dx, w, p.wrap);
                match (ty, tx) {
                    (Some(ty), Some(tx)) => moves.push((y, col, ty, tx)),
                    _ => return Err(Error::PieceOutOfBounds { piece: index }),
                }
            }
        }
        for (y, col, ty, tx) in moves {
            for ch in 0..c {
                let i = out.offset(ch, ty, tx);
                out.values_mut()[i] = source.get(ch, y, col);
            }
        }
    }
    Ok(out)
}

/// Apply a transform to a latent. Mosaic pieces are cut from the field as
/// it enters each mosaic op.
pub fn apply_transform<L: Lattice>(
    x: &L,
    t: &CrystalTransform,
    reservoir: Option<&L>,
) -> Result<L> {
    let mut cur = x.clone();
    for op in &t.ops {
        cur = match op {
            CrystalOp::Roll(s) => roll(&cur, s, reservoir)?,
            CrystalOp::Glide(p) => glide(&cur, p, reservoir)?,
            CrystalOp::Mosaic(m) => mosaic(&cur, &cur, m)?,
        };
    }
    Ok(cur)
}

fn scale_transform(t: &CrystalTransform, k: usize) -> CrystalTransform {
    let ki = k as i64;
    let ops = t
        .ops
        .iter()
        .map(|op| match op {
            CrystalOp::Roll(s) => CrystalOp::Roll(s.scaled(ki)),
            CrystalOp::Glide(p) => CrystalOp::Glide(RowShiftProfile {
                shifts: p
                    .shifts
                    .iter()
                    .flat_map(|&s| std::iter::repeat_n(s * ki, k))
                    .collect(),
                wrap: p.wrap,
            }),
            CrystalOp::Mosaic(m) => CrystalOp::Mosaic(RegionMosaic {
                pieces: m
                    .pieces
                    .iter()
                    .map(|p| MosaicPiece {
                        mask: p.mask.upscale(k),
                        dx: p.dx * ki,
                        dy: p.dy * ki,
                        wrap: p.wrap,
                    })
                    .collect(),
            }),
        })
        .collect();
    CrystalTransform { ops }
}

/// Apply the latent-grid transform `t` to an image-resolution conditioning
/// map (segmentation map). Shifts and masks are multiplied by the
/// autoencoder factor; cells vacated with wrap off keep the original
/// conditioning value.
pub fn transform_conditioning(
    segmap: &ImageField,
    t: &CrystalTransform,
    latent_hw: (usize, usize),
) -> Result<ImageField> {
    let (lh, lw) = latent_hw;
    if segmap.height() != lh * VAE_SCALE || segmap.width() != lw * VAE_SCALE {
        return Err(Error::InvalidShape(format!(
            "segmap {}x{} is not {VAE_SCALE}x the {lh}x{lw} latent grid",
            segmap.height(),
            segmap.width()
        )));
    }
    let scaled = scale_transform(t, VAE_SCALE);
    let reservoir = scaled.needs_reservoir().then_some(segmap);
    apply_transform(segmap, &scaled, reservoir)
}
