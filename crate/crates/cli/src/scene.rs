//! Turn a validated [`SceneConfig`] into pipeline calls.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

use noisecine::crystal::{discretize_shear, CrystalOp, CrystalTransform, LatticeShift};
use noisecine::dump::read_latent;
use noisecine::liquid::{parse_flow_map, Displacement, FlowField, KurtosisSpec};
use noisecine::pipeline::{
    animate_layers, composite_seeds, generate_crystal, generate_liquid, image_to_video,
    seamless_upscale, vid2vid_tracked, Backend, CrystalOptions, DenoiseSchedule, Generation,
    Injection, Layer, LiquidOptions, Scene, TrackingOptions,
};
use noisecine::{
    derive_seed, sample_noise, LatentField, Lattice, Plane, SeededNoiseSpec, VAE_SCALE,
};

use crate::config::{ConfigError, LiquidConfig, Method, SceneConfig};
use crate::imageio::{load_alpha, load_mask, load_rgb};

/// Seeds actually used, by role.
pub type Seeds = BTreeMap<String, u64>;

fn latent_noise(seed: u64, h: usize, w: usize) -> Result<LatentField> {
    Ok(sample_noise(&SeededNoiseSpec::new(
        seed,
        [noisecine::LATENT_CHANNELS, h / VAE_SCALE, w / VAE_SCALE],
    ))?)
}

fn flow_from(path: &Path, liquid: &LiquidConfig, size: (usize, usize)) -> Result<FlowField> {
    let img = load_rgb(path)?;
    if (img.height(), img.width()) != size {
        return Err(ConfigError {
            key: "flow_map".into(),
            message: format!(
                "flow map is {}x{}, expected {}x{}",
                img.width(),
                img.height(),
                size.1,
                size.0
            ),
        }
        .into());
    }
    Ok(parse_flow_map(&img, &liquid.calibration())?.with_wrap(liquid.wrap_x, liquid.wrap_y))
}

fn dense_flow(path: &Path) -> Result<Displacement> {
    let f = read_latent(path)?;
    let [c, h, w] = f.shape();
    if c != 2 {
        bail!(
            "{}: flow dumps need 2 channels (dx, dy), found {c}",
            path.display()
        );
    }
    Ok(Displacement {
        height: h,
        width: w,
        dx: f.channel(0).to_vec(),
        dy: f.channel(1).to_vec(),
    })
}

fn crystal_transforms(cfg: &SceneConfig, latent_h: usize) -> Result<Vec<CrystalTransform>> {
    let c = &cfg.crystal;
    (0..cfg.frames as i64)
        .map(|f| {
            let mut ops = vec![CrystalOp::Roll(LatticeShift {
                dx: c.pan[0] * f,
                dy: c.pan[1] * f,
                wrap_x: c.wrap,
                wrap_y: c.wrap,
            })];
            if let Some(s) = &c.shear {
                let mut p = discretize_shear(s.horizon, s.near * f, s.far * f, latent_h)?;
                p.wrap = c.wrap;
                ops.push(CrystalOp::Glide(p));
            }
            Ok(CrystalTransform { ops })
        })
        .collect()
}

/// Run the configured method. `seeds` is filled even when the run fails.
pub fn execute<B: Backend>(cfg: &SceneConfig, backend: B, seeds: &mut Seeds) -> Result<Generation> {
    let schedule = DenoiseSchedule::new(cfg.schedule.steps, cfg.schedule.switch)?;
    let (h, w) = (cfg.size.height, cfg.size.width);
    seeds.insert("seed".into(), cfg.seed);
    let segmap = cfg.segmap.as_deref().map(load_rgb).transpose()?;
    let track = cfg.track.unwrap_or(true);
    let strength = cfg.strength.unwrap_or(0.0);

    let generation = match cfg.method {
        Method::Crystal | Method::Liquid => {
            let scene = Scene {
                prompt: cfg.prompt.clone(),
                segmap,
                noise: latent_noise(cfg.seed, h, w)?,
            };
            if cfg.method == Method::Crystal {
                let opts = CrystalOptions {
                    reservoir_seed: derive_seed(cfg.seed, 0x7265_7365),
                    ..Default::default()
                };
                seeds.insert("reservoir".into(), opts.reservoir_seed);
                let transforms = crystal_transforms(cfg, h / VAE_SCALE)?;
                generate_crystal(backend, &scene, &schedule, &transforms, &opts)?
            } else {
                let path = cfg.flow_map.as_deref().context("flow_map")?;
                let flow = flow_from(path, &cfg.liquid, (h, w))?;
                let l = &cfg.liquid;
                let injection = (l.inject_strength > 0.0).then(|| Injection {
                    strength: l.inject_strength,
                    seed: derive_seed(cfg.seed, 0x0069_6e6a),
                    side: l.inject_side,
                });
                if let Some(i) = &injection {
                    seeds.insert("injection".into(), i.seed);
                }
                let opts = LiquidOptions {
                    beta: l.beta,
                    floor: l.floor,
                    kurtosis: KurtosisSpec {
                        delta: l.kurtosis_delta.unwrap_or(1.0),
                        enabled: l.kurtosis_delta.is_some(),
                    },
                    injection,
                    ..Default::default()
                };
                generate_liquid(backend, &scene, &schedule, &flow, cfg.frames, &opts)?
            }
        }
        Method::Img2vid => {
            let src = load_rgb(cfg.source.as_deref().context("source")?)?;
            let flow = flow_from(
                cfg.flow_map.as_deref().context("flow_map")?,
                &cfg.liquid,
                (src.height(), src.width()),
            )?;
            let opts = TrackingOptions {
                seed: cfg.seed,
                track,
            };
            image_to_video(
                backend,
                &cfg.prompt,
                &src,
                &flow,
                &schedule,
                strength,
                cfg.frames,
                &opts,
            )?
        }
        Method::Layers => {
            let mut layers = Vec::with_capacity(cfg.layers.len());
            for (i, l) in cfg.layers.iter().enumerate() {
                let image = load_rgb(&l.image)?;
                let size = (image.height(), image.width());
                let alpha = match &l.alpha {
                    Some(p) => load_alpha(p)?,
                    None => Plane::filled(size.0, size.1, 1.0)?,
                };
                let flow = match &l.flow_map {
                    Some(p) => flow_from(p, &cfg.liquid, size)?,
                    None => FlowField::still(size.0, size.1),
                };
                let seed = l.seed.unwrap_or_else(|| derive_seed(cfg.seed, i as u64));
                seeds.insert(format!("layer{i}"), seed);
                layers.push(Layer {
                    image,
                    alpha,
                    flow,
                    seed,
                });
            }
            animate_layers(
                backend,
                &cfg.prompt,
                &layers,
                &schedule,
                strength,
                cfg.frames,
                track,
            )?
        }
        Method::Vid2vid => {
            let frames = cfg
                .inputs
                .iter()
                .map(|p| load_rgb(p))
                .collect::<Result<Vec<_>>>()?;
            let flows = cfg
                .flows
                .iter()
                .map(|p| dense_flow(p))
                .collect::<Result<Vec<_>>>()?;
            let opts = TrackingOptions {
                seed: cfg.seed,
                track,
            };
            let wrap = cfg.liquid.wrap_x && cfg.liquid.wrap_y;
            vid2vid_tracked(
                backend,
                &cfg.prompt,
                &frames,
                &flows,
                &schedule,
                strength,
                &opts,
                wrap,
            )?
        }
        Method::Upscale => {
            let canvas = cfg.canvas.context("canvas")?;
            let noise = latent_noise(cfg.seed, canvas.height, canvas.width)?;
            seamless_upscale(
                backend,
                &cfg.prompt,
                &noise,
                &cfg.windows,
                segmap.as_ref(),
                &schedule,
            )?
        }
        Method::Composite => {
            let fg_seed = cfg.fg_seed.unwrap_or_else(|| derive_seed(cfg.seed, 1));
            let bg_seed = cfg.bg_seed.unwrap_or_else(|| derive_seed(cfg.seed, 2));
            seeds.insert("fg".into(), fg_seed);
            seeds.insert("bg".into(), bg_seed);
            let mut mask = load_mask(cfg.mask.as_deref().context("mask")?)?;
            if (mask.height, mask.width) == (h, w) {
                mask = mask.downscale(VAE_SCALE)?;
            }
            let p = cfg.combine_fraction.context("combine_fraction")?;
            composite_seeds(
                backend,
                &cfg.prompt,
                segmap.as_ref(),
                &latent_noise(fg_seed, h, w)?,
                &latent_noise(bg_seed, h, w)?,
                &mask,
                p,
                &schedule,
            )?
        }
    };
    Ok(generation)
}
