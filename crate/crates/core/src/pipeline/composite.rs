//! Seed compositing and windowed generation from a shared noise canvas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ImageField, LatentField, Lattice, Mask, VAE_SCALE};
use crate::pipeline::backend::{Accounted, Backend, Segment};
use crate::pipeline::generate::{check_deterministic, Generation};
use crate::pipeline::schedule::DenoiseSchedule;

/// Denoise two seeds separately for a fraction `p` of the process, paste the
/// foreground under `mask` (latent grid) onto the background, and finish
/// denoising the composite.
///
/// `p = 0` composites raw noise; larger `p` keeps more of the foreground's
/// own lighting.
#[allow(clippy::too_many_arguments)]
pub fn composite_seeds<B: Backend>(
    backend: B,
    prompt: &str,
    segmap: Option<&ImageField>,
    fg: &LatentField,
    bg: &LatentField,
    mask: &Mask,
    p: f64,
    schedule: &DenoiseSchedule,
) -> Result<Generation> {
    if fg.shape() != bg.shape() {
        return Err(Error::mismatch(bg.shape(), fg.shape()));
    }
    if (mask.height, mask.width) != (fg.height(), fg.width()) {
        return Err(Error::mismatch(
            (fg.height(), fg.width()),
            (mask.height, mask.width),
        ));
    }
    let level = schedule.level_after_fraction(p)?;
    let n = schedule.total_steps();

    let mut backend = Accounted::new(backend);
    check_deterministic(&mut backend)?;
    let cond = backend
        .prepare_conditioning(prompt, segmap)
        .map_err(Error::backend(None))?;
    let fg = backend
        .denoise(Segment::Prefix, fg, n, level, &cond, schedule)
        .map_err(Error::backend(None))?;
    let mut merged = backend
        .denoise(Segment::Prefix, bg, n, level, &cond, schedule)
        .map_err(Error::backend(None))?;
    let (c, h, w) = merged.dims();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                if mask.at(y, x) {
                    let i = merged.offset(ch, y, x);
                    merged.values_mut()[i] = fg.get(ch, y, x);
                }
            }
        }
    }
    let done = backend
        .denoise(Segment::Suffix, &merged, level, 0, &cond, schedule)
        .map_err(Error::backend(Some(0)))?;
    let frame = backend.decode(&done).map_err(Error::backend(Some(0)))?;
    Ok(Generation {
        frames: vec![frame],
        latents: vec![done],
        ledger: backend.ledger,
        ..Default::default()
    })
}

/// A generation window on the canvas, in image px.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

fn aligned(what: &str, v: usize) -> Result<usize> {
    if !v.is_multiple_of(VAE_SCALE) {
        return Err(Error::Alignment(format!(
            "window {what} {v} is not a multiple of {VAE_SCALE} px"
        )));
    }
    Ok(v / VAE_SCALE)
}

/// Generate each window from the canvas noise under it.
///
/// The canvas tiles: windows running past its edge wrap around. Because a
/// window's noise is cut from the canvas rather than sampled per window,
/// overlapping windows see identical noise in their overlap.
pub fn seamless_upscale<B: Backend>(
    backend: B,
    prompt: &str,
    canvas: &LatentField,
    windows: &[Window],
    canvas_segmap: Option<&ImageField>,
    schedule: &DenoiseSchedule,
) -> Result<Generation> {
    let (c, ch, cw) = canvas.dims();
    if let Some(seg) = canvas_segmap {
        if (seg.height(), seg.width()) != (ch * VAE_SCALE, cw * VAE_SCALE) {
            return Err(Error::mismatch(
                (ch * VAE_SCALE, cw * VAE_SCALE),
                (seg.height(), seg.width()),
            ));
        }
    }
    let mut cells = Vec::with_capacity(windows.len());
    for win in windows {
        let cell = (
            aligned("x", win.x)?,
            aligned("y", win.y)?,
            aligned("width", win.width)?,
            aligned("height", win.height)?,
        );
        if cell.2 == 0 || cell.3 == 0 {
            return Err(Error::InvalidShape("empty window".into()));
        }
        cells.push(cell);
    }

    let mut backend = Accounted::new(backend);
    check_deterministic(&mut backend)?;
    let n = schedule.total_steps();
    let mut out = Generation::default();
    for (f, (win, &(x0, y0, w, h))) in windows.iter().zip(&cells).enumerate() {
        let noise = LatentField::from_fn(c, h, w, |k, y, x| {
            canvas.get(k, (y0 + y) % ch, (x0 + x) % cw)
        })?;
        let seg = canvas_segmap.map(|s| {
            let (sh, sw) = (s.height(), s.width());
            ImageField::from_fn(win.height, win.width, |y, x| {
                s.pixel((win.y + y) % sh, (win.x + x) % sw)
            })
        });
        let seg = seg.transpose()?;
        let cond = backend
            .prepare_conditioning(prompt, seg.as_ref())
            .map_err(Error::backend(Some(f)))?;
        let done = backend
            .denoise(Segment::Full, &noise, n, 0, &cond, schedule)
            .map_err(Error::backend(Some(f)))?;
        out.frames
            .push(backend.decode(&done).map_err(Error::backend(Some(f)))?);
        out.latents.push(done);
    }
    out.ledger = backend.ledger;
    Ok(out)
}
