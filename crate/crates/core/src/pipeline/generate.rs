//! Crystal and liquid generation loops.

use serde::Serialize;

use crate::crystal::{apply_transform, transform_conditioning, CrystalTransform};
use crate::error::{Error, Result};
use crate::field::{ImageField, LatentField, Lattice};
use crate::liquid::{
    adjust_kurtosis, displacement_at, inject_noise, match_stats, reduce_variance, warp, FlowField,
    KurtosisSpec, VarianceReductionSpec,
};
use crate::noise::{derive_seed, sample_noise, SeededNoiseSpec};
use crate::pipeline::backend::{Accounted, Backend, CallLedger, ConditioningHandle, Segment};
use crate::pipeline::schedule::DenoiseSchedule;
use crate::stats::{measure_stats, ChannelStats};

/// Prompt, optional segmentation map, and the input noise of frame 0.
#[derive(Debug, Clone)]
pub struct Scene {
    pub prompt: String,
    pub segmap: Option<ImageField>,
    pub noise: LatentField,
}

/// Frames plus everything needed to audit how they were made.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Generation {
    #[serde(skip)]
    pub frames: Vec<ImageField>,
    /// Final latents, one per frame, before decoding.
    #[serde(skip)]
    pub latents: Vec<LatentField>,
    pub ledger: CallLedger,
    pub warnings: Vec<String>,
    /// Liquid only: statistics recorded before decoding.
    pub recorded_stats: Option<ChannelStats>,
    /// Liquid only: statistics measured right after re-matching, per frame.
    pub matched_stats: Vec<ChannelStats>,
}

pub(crate) fn check_deterministic<B: Backend>(backend: &mut Accounted<B>) -> Result<()> {
    let caps = backend.capabilities().map_err(Error::backend(None))?;
    if !caps.deterministic {
        return Err(Error::Determinism(
            "backend declares itself non-deterministic".into(),
        ));
    }
    Ok(())
}

/// Run one denoise step twice on the same input and demand bit equality.
pub(crate) fn probe_determinism<B: Backend>(
    backend: &mut Accounted<B>,
    noise: &LatentField,
    cond: &ConditioningHandle,
    schedule: &DenoiseSchedule,
) -> Result<()> {
    let n = schedule.total_steps();
    let a = backend
        .denoise(Segment::Probe, noise, n, n - 1, cond, schedule)
        .map_err(Error::backend(None))?;
    let b = backend
        .denoise(Segment::Probe, noise, n, n - 1, cond, schedule)
        .map_err(Error::backend(None))?;
    let same = a
        .data()
        .iter()
        .zip(b.data())
        .all(|(x, y)| x.to_bits() == y.to_bits());
    if !same {
        return Err(Error::Determinism(format!(
            "two identical denoise calls differ by up to {}",
            a.max_abs_diff(&b)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrystalOptions {
    /// Probe the backend for determinism before generating.
    pub verify_determinism: bool,
    /// Seed of the reservoir that fills cells vacated with wrap off.
    pub reservoir_seed: u64,
}

impl Default for CrystalOptions {
    fn default() -> Self {
        Self {
            verify_determinism: true,
            reservoir_seed: 0x5eed_0fc0_ffee,
        }
    }
}

/// Crystal generation with recrystallisation.
///
/// The prefix (pure noise down to the switch level) is denoised once with the
/// untransformed noise and conditioning. Each frame's transform is then
/// applied to that cached latent and to the segmentation map, and the frame
/// is denoised the rest of the way and decoded.
pub fn generate_crystal<B: Backend>(
    backend: B,
    scene: &Scene,
    schedule: &DenoiseSchedule,
    transforms: &[CrystalTransform],
    opts: &CrystalOptions,
) -> Result<Generation> {
    if transforms.is_empty() {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    if !transforms[0].is_identity() {
        return Err(Error::Range(
            "frame 0 transform must be the identity".into(),
        ));
    }
    let mut backend = Accounted::new(backend);
    check_deterministic(&mut backend)?;
    let base_cond = backend
        .prepare_conditioning(&scene.prompt, scene.segmap.as_ref())
        .map_err(Error::backend(None))?;
    if opts.verify_determinism {
        probe_determinism(&mut backend, &scene.noise, &base_cond, schedule)?;
    }

    let (n, switch) = (schedule.total_steps(), schedule.switch_level());
    let cached = backend
        .denoise(
            Segment::Prefix,
            &scene.noise,
            n,
            switch,
            &base_cond,
            schedule,
        )
        .map_err(Error::backend(None))?;
    let latent_hw = (cached.height(), cached.width());

    let mut out = Generation::default();
    for (f, t) in transforms.iter().enumerate() {
        let reservoir = if t.is_identity() {
            None
        } else {
            let [c, h, w] = cached.shape();
            let fresh = sample_noise(&SeededNoiseSpec::new(
                derive_seed(opts.reservoir_seed, f as u64),
                [c, h, w],
            ))?;
            Some(match_stats(&fresh, &measure_stats(&cached))?)
        };
        let latent = apply_transform(&cached, t, reservoir.as_ref())?;
        let cond = match (&scene.segmap, t.is_identity()) {
            (Some(seg), false) => {
                let moved = transform_conditioning(seg, t, latent_hw)?;
                backend
                    .prepare_conditioning(&scene.prompt, Some(&moved))
                    .map_err(Error::backend(Some(f)))?
            }
            _ => base_cond.clone(),
        };
        let done = backend
            .denoise(Segment::Suffix, &latent, switch, 0, &cond, schedule)
            .map_err(Error::backend(Some(f)))?;
        out.frames
            .push(backend.decode(&done).map_err(Error::backend(Some(f)))?);
        out.latents.push(done);
    }
    out.ledger = backend.ledger;
    Ok(out)
}

/// Plain single-image generation: pure noise to clean, then decode.
pub fn generate_single<B: Backend>(
    backend: B,
    scene: &Scene,
    schedule: &DenoiseSchedule,
) -> Result<Generation> {
    let mut backend = Accounted::new(backend);
    check_deterministic(&mut backend)?;
    let cond = backend
        .prepare_conditioning(&scene.prompt, scene.segmap.as_ref())
        .map_err(Error::backend(None))?;
    let n = schedule.total_steps();
    let done = backend
        .denoise(Segment::Full, &scene.noise, n, 0, &cond, schedule)
        .map_err(Error::backend(Some(0)))?;
    let frame = backend.decode(&done).map_err(Error::backend(Some(0)))?;
    Ok(Generation {
        frames: vec![frame],
        latents: vec![done],
        ledger: backend.ledger,
        ..Default::default()
    })
}

/// Where extra decorrelating noise is added in the liquid loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InjectionSide {
    /// On the decoded image (0–255 scale), after warping.
    Image,
    /// On the re-encoded latent, before statistics are re-matched.
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Injection {
    pub strength: f64,
    pub seed: u64,
    pub side: InjectionSide,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiquidOptions {
    pub beta: f64,
    pub floor: f64,
    pub kurtosis: KurtosisSpec,
    pub injection: Option<Injection>,
    pub verify_determinism: bool,
}

impl Default for LiquidOptions {
    fn default() -> Self {
        Self {
            beta: 0.5,
            floor: 0.7,
            kurtosis: KurtosisSpec::default(),
            injection: None,
            verify_determinism: true,
        }
    }
}

/// Switch fractions below this draw a warning in the liquid loop.
pub const LIQUID_MIN_SWITCH: f64 = 0.5;

/// Liquid-noise generation.
///
/// Per frame: take the cached switch-level latent, reduce its variance and
/// decode (both frame-independent, done once), warp the decoded image by the
/// flow at frame `f`, optionally inject noise, re-encode, re-match the
/// recorded channel statistics (std first, then mean), optionally adjust
/// kurtosis, denoise to 0 and decode.
pub fn generate_liquid<B: Backend>(
    backend: B,
    scene: &Scene,
    schedule: &DenoiseSchedule,
    flow: &FlowField,
    frames: usize,
    opts: &LiquidOptions,
) -> Result<Generation> {
    if frames == 0 {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    let mut out = Generation::default();
    if schedule.switch_fraction() < LIQUID_MIN_SWITCH {
        let msg = format!(
            "switch fraction {} is below {LIQUID_MIN_SWITCH}; liquid noise needs high switch fractions",
            schedule.switch_fraction()
        );
        log::warn!("{msg}");
        out.warnings.push(msg);
    }
    let mut backend = Accounted::new(backend);
    check_deterministic(&mut backend)?;
    let base_cond = backend
        .prepare_conditioning(&scene.prompt, scene.segmap.as_ref())
        .map_err(Error::backend(None))?;
    if opts.verify_determinism {
        probe_determinism(&mut backend, &scene.noise, &base_cond, schedule)?;
    }

    let (n, switch) = (schedule.total_steps(), schedule.switch_level());
    let cached = backend
        .denoise(
            Segment::Prefix,
            &scene.noise,
            n,
            switch,
            &base_cond,
            schedule,
        )
        .map_err(Error::backend(None))?;
    let variance = VarianceReductionSpec {
        switch_fraction: schedule.switch_fraction(),
        beta: opts.beta,
        floor: opts.floor,
    };
    let (reduced, recorded) = reduce_variance(&cached, &variance)?;
    let decoded = backend.decode(&reduced).map_err(Error::backend(None))?;
    if (decoded.height(), decoded.width()) != (flow.height, flow.width) {
        return Err(Error::mismatch(
            (decoded.height(), decoded.width()),
            (flow.height, flow.width),
        ));
    }

    for f in 0..frames {
        let disp = displacement_at(flow, f as f64);
        let mut image = warp(&decoded, &disp, flow.wrap_x, flow.wrap_y)?;
        if let Some(inj) = opts.injection.filter(|i| i.side == InjectionSide::Image) {
            image = inject_noise(&image, derive_seed(inj.seed, f as u64), inj.strength)?;
        }
        let mut latent = backend.encode(&image).map_err(Error::backend(Some(f)))?;
        if let Some(inj) = opts.injection.filter(|i| i.side == InjectionSide::Latent) {
            latent = inject_noise(&latent, derive_seed(inj.seed, f as u64), inj.strength)?;
        }
        let matched = match_stats(&latent, &recorded).map_err(|e| match e {
            Error::DegenerateChannel { channel, std } => {
                log::error!("frame {f}: degenerate channel {channel}");
                Error::DegenerateChannel { channel, std }
            }
            other => other,
        })?;
        out.matched_stats.push(measure_stats(&matched));
        let shaped = adjust_kurtosis(&matched, &opts.kurtosis)?;
        let cond = match &scene.segmap {
            Some(seg) if f > 0 => {
                let moved = warp(seg, &disp, flow.wrap_x, flow.wrap_y)?;
                backend
                    .prepare_conditioning(&scene.prompt, Some(&moved))
                    .map_err(Error::backend(Some(f)))?
            }
            _ => base_cond.clone(),
        };
        let done = backend
            .denoise(Segment::Suffix, &shaped, switch, 0, &cond, schedule)
            .map_err(Error::backend(Some(f)))?;
        out.frames
            .push(backend.decode(&done).map_err(Error::backend(Some(f)))?);
        out.latents.push(done);
    }
    out.recorded_stats = Some(recorded);
    out.ledger = backend.ledger;
    Ok(out)
}
