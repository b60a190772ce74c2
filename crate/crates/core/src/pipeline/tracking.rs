//! Image-to-image loops that carry a persistent noise field along with the
//! scene motion (noise tracking).

use crate::error::{Error, Result};
use crate::field::{ImageField, LatentField, Lattice, Plane, LATENT_CHANNELS, VAE_SCALE};
use crate::liquid::{displacement_at, warp, Displacement, FlowField};
use crate::noise::{sample_noise, SeededNoiseSpec};
use crate::pipeline::backend::{Accounted, Backend, ConditioningHandle, Segment};
use crate::pipeline::generate::{check_deterministic, Generation};
use crate::pipeline::schedule::DenoiseSchedule;

/// Four-channel noise at image resolution: latent noise from `seed`,
/// nearest-upsampled 8×, so it can be warped with image-space motion.
pub fn image_res_noise(seed: u64, height: usize, width: usize) -> Result<LatentField> {
    if !height.is_multiple_of(VAE_SCALE) || !width.is_multiple_of(VAE_SCALE) {
        return Err(Error::Alignment(format!(
            "{height}x{width} is not a multiple of {VAE_SCALE}"
        )));
    }
    let small = sample_noise(&SeededNoiseSpec::new(
        seed,
        [LATENT_CHANNELS, height / VAE_SCALE, width / VAE_SCALE],
    ))?;
    LatentField::from_fn(LATENT_CHANNELS, height, width, |c, y, x| {
        small.get(c, y / VAE_SCALE, x / VAE_SCALE)
    })
}

/// Latent-grid noise read at each cell's centre pixel `(8·y + 4, 8·x + 4)`.
/// Sampling (not averaging) keeps every value an exact noise draw.
pub fn to_latent_grid(noise: &LatentField) -> Result<LatentField> {
    let [c, h, w] = noise.shape();
    if h % VAE_SCALE != 0 || w % VAE_SCALE != 0 {
        return Err(Error::Alignment(format!(
            "{h}x{w} is not a multiple of {VAE_SCALE}"
        )));
    }
    let half = VAE_SCALE / 2;
    LatentField::from_fn(c, h / VAE_SCALE, w / VAE_SCALE, |ch, y, x| {
        noise.get(ch, y * VAE_SCALE + half, x * VAE_SCALE + half)
    })
}

/// Mean absolute difference between each frame moved by its displacement
/// and the next frame, averaged over transitions.
pub fn motion_compensated_residual(
    frames: &[ImageField],
    steps: &[Displacement],
    wrap: bool,
) -> Result<f64> {
    if frames.len() < 2 {
        return Err(Error::TooFew {
            needed: 2,
            got: frames.len(),
        });
    }
    if steps.len() != frames.len() - 1 {
        return Err(Error::mismatch(frames.len() - 1, steps.len()));
    }
    let mut total = 0.0;
    for (pair, d) in frames.windows(2).zip(steps) {
        if pair[0].shape() != pair[1].shape() {
            return Err(Error::mismatch(pair[0].shape(), pair[1].shape()));
        }
        total += warp(&pair[0], d, wrap, wrap)?.mean_abs_diff(&pair[1]);
    }
    Ok(total / steps.len() as f64)
}

/// Noise `image` at `level` with `noise` (image resolution), denoise, decode.
fn img2img<B: Backend>(
    backend: &mut Accounted<B>,
    image: &ImageField,
    noise: &LatentField,
    level: usize,
    cond: &ConditioningHandle,
    schedule: &DenoiseSchedule,
    frame: usize,
) -> Result<(LatentField, ImageField)> {
    let err = || Error::backend(Some(frame));
    let clean = backend.encode(image).map_err(err())?;
    let noise = to_latent_grid(noise)?;
    if noise.shape() != clean.shape() {
        return Err(Error::mismatch(clean.shape(), noise.shape()));
    }
    let noisy = backend
        .add_noise(&clean, &noise, level, schedule)
        .map_err(err())?;
    let done = backend
        .denoise(Segment::Full, &noisy, level, 0, cond, schedule)
        .map_err(err())?;
    let decoded = backend.decode(&done).map_err(err())?;
    Ok((done, decoded))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingOptions {
    /// Seed of the persistent noise field.
    pub seed: u64,
    /// Warp the noise with the scene (`true`) or keep it frozen.
    pub track: bool,
}

impl Default for TrackingOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            track: true,
        }
    }
}

/// Animate a still image with a flow field.
///
/// Frame `f` warps the source by the flow's absolute displacement at `f`,
/// and (when tracking) warps the persistent noise by the same displacement.
#[allow(clippy::too_many_arguments)]
pub fn image_to_video<B: Backend>(
    backend: B,
    prompt: &str,
    src: &ImageField,
    flow: &FlowField,
    schedule: &DenoiseSchedule,
    strength: f64,
    frames: usize,
    opts: &TrackingOptions,
) -> Result<Generation> {
    let layer = Layer {
        image: src.clone(),
        alpha: Plane::filled(src.height(), src.width(), 1.0)?,
        flow: flow.clone(),
        seed: opts.seed,
    };
    animate_layers(
        backend,
        prompt,
        &[layer],
        schedule,
        strength,
        frames,
        opts.track,
    )
}

/// One animation layer; alpha 1 is opaque.
#[derive(Debug, Clone)]
pub struct Layer {
    pub image: ImageField,
    pub alpha: Plane,
    pub flow: FlowField,
    /// Seed of this layer's noise field.
    pub seed: u64,
}

/// Layered animation: each layer's image, alpha and noise follow its own
/// flow; images and noise fields are composited bottom to top with
/// `acc = α·layer + (1 − α)·acc`, then each frame is an img2img pass.
pub fn animate_layers<B: Backend>(
    backend: B,
    prompt: &str,
    layers: &[Layer],
    schedule: &DenoiseSchedule,
    strength: f64,
    frames: usize,
    track: bool,
) -> Result<Generation> {
    let first = layers.first().ok_or(Error::TooFew { needed: 1, got: 0 })?;
    if frames == 0 {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    let (h, w) = (first.image.height(), first.image.width());
    let mut noises = Vec::with_capacity(layers.len());
    for l in layers {
        if (l.image.height(), l.image.width()) != (h, w) {
            return Err(Error::mismatch((h, w), (l.image.height(), l.image.width())));
        }
        if (l.alpha.height(), l.alpha.width()) != (h, w) {
            return Err(Error::mismatch((h, w), (l.alpha.height(), l.alpha.width())));
        }
        if (l.flow.height, l.flow.width) != (h, w) {
            return Err(Error::mismatch((h, w), (l.flow.height, l.flow.width)));
        }
        if l.alpha.values().iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Range("alpha outside [0, 1]".into()));
        }
        noises.push(image_res_noise(l.seed, h, w)?);
    }
    let level = schedule.strength_level(strength)?;

    let mut backend = Accounted::new(backend);
    check_deterministic(&mut backend)?;
    let cond = backend
        .prepare_conditioning(prompt, None)
        .map_err(Error::backend(None))?;

    let mut out = Generation::default();
    for f in 0..frames {
        let mut image = ImageField::filled(h, w, [0.0; 3])?;
        let mut noise = LatentField::zeros(LATENT_CHANNELS, h, w)?;
        for (l, n) in layers.iter().zip(&noises) {
            let d = displacement_at(&l.flow, f as f64);
            let (wx, wy) = (l.flow.wrap_x, l.flow.wrap_y);
            let moved = warp(&l.image, &d, wx, wy)?;
            let alpha = warp(&l.alpha, &d, wx, wy)?;
            let n = if track {
                warp(n, &d, wx, wy)?
            } else {
                n.clone()
            };
            blend(&mut image, &moved, &alpha);
            blend(&mut noise, &n, &alpha);
        }
        let (latent, frame) = img2img(&mut backend, &image, &noise, level, &cond, schedule, f)?;
        out.latents.push(latent);
        out.frames.push(frame);
    }
    out.ledger = backend.ledger;
    Ok(out)
}

fn blend<L: Lattice>(acc: &mut L, layer: &L, alpha: &Plane) {
    let (c, h, w) = acc.dims();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let a = alpha.at(y, x);
                let i = acc.offset(ch, y, x);
                let v = acc.values()[i];
                acc.values_mut()[i] = a * layer.get(ch, y, x) + (1.0 - a) * v;
            }
        }
    }
}

/// Re-render a video with one persistent noise field.
///
/// `flows[f]` moves frame `f` onto frame `f + 1`; when tracking, the noise is
/// warped by each flow in turn, so it stays attached to the moving content.
/// At strength level 0 the input frames are returned untouched.
#[allow(clippy::too_many_arguments)]
pub fn vid2vid_tracked<B: Backend>(
    backend: B,
    prompt: &str,
    frames: &[ImageField],
    flows: &[Displacement],
    schedule: &DenoiseSchedule,
    strength: f64,
    opts: &TrackingOptions,
    wrap: bool,
) -> Result<Generation> {
    let first = frames.first().ok_or(Error::TooFew { needed: 1, got: 0 })?;
    if flows.len() + 1 != frames.len() {
        return Err(Error::mismatch(frames.len() - 1, flows.len()));
    }
    let (h, w) = (first.height(), first.width());
    for f in frames {
        if (f.height(), f.width()) != (h, w) {
            return Err(Error::mismatch((h, w), (f.height(), f.width())));
        }
    }
    let level = schedule.strength_level(strength)?;
    if level == 0 {
        return Ok(Generation {
            frames: frames.to_vec(),
            ..Default::default()
        });
    }

    let mut backend = Accounted::new(backend);
    check_deterministic(&mut backend)?;
    let cond = backend
        .prepare_conditioning(prompt, None)
        .map_err(Error::backend(None))?;
    let mut noise = image_res_noise(opts.seed, h, w)?;
    let mut out = Generation::default();
    for (f, image) in frames.iter().enumerate() {
        if f > 0 && opts.track {
            noise = warp(&noise, &flows[f - 1], wrap, wrap)?;
        }
        let (latent, frame) = img2img(&mut backend, image, &noise, level, &cond, schedule, f)?;
        out.latents.push(latent);
        out.frames.push(frame);
    }
    out.ledger = backend.ledger;
    Ok(out)
}
