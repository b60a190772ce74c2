//! `noisecine` command-line front end.

mod config;
mod imageio;
mod scene;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use noisecine::dump::{read_latent, write_latent};
use noisecine::latentvis::{
    apply_colormap, fit_colormap, probe_idempotency, probe_roll, ColorMap34,
};
use noisecine::metric::{
    default_rows, extract_slices, slice_montage, video_smoothness, DEFAULT_ROWS,
};
use noisecine::pipeline::{Backend, BridgeBackend, MockBackend};
use noisecine::{ErrorClass, Lattice};

use crate::config::{BackendConfig, ConfigError, SceneConfig};
use crate::imageio::{hstack, load_rgb, save_rgb};
use crate::scene::{execute, Seeds};

#[derive(Parser)]
#[command(
    name = "noisecine",
    version,
    about = "Noise-transport video generation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendKind {
    Mock,
    Bridge,
}

#[derive(clap::Args)]
struct BackendArgs {
    /// Backend to drive (default: the config's choice, else mock).
    #[arg(long, value_enum)]
    backend: Option<BackendKind>,
    /// Command line that starts the bridge server.
    #[arg(long)]
    bridge_cmd: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate frames from a scene config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Also write final latents as NCLF dumps.
        #[arg(long)]
        dump_latents: bool,
        /// Override the config's frame count.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Score temporal smoothness of a directory of PNG frames.
    Metric {
        #[arg(long)]
        frames: PathBuf,
        /// Comma-separated row indices (default: 5 evenly spaced rows).
        #[arg(long, value_delimiter = ',')]
        rows: Vec<usize>,
        /// Directory for report.json and montage.png.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a latent dump through a color map, at latent resolution.
    LatentPreview {
        #[arg(long)]
        latent: PathBuf,
        #[arg(long)]
        colormap: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a color map from `<name>.nclf` + `<name>.png` pairs.
    FitColormap {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll and round-trip probes of the backend's autoencoder.
    ProbeVae {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        backend: BackendArgs,
        /// Latent cells to roll by, horizontally.
        #[arg(long, default_value_t = 1)]
        dx: i64,
        #[arg(long, default_value_t = 0)]
        dy: i64,
        /// Encode/decode round trips.
        #[arg(long, default_value_t = 3)]
        rounds: usize,
    },
}

/// Exit code per failure class.
fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 3;
    }
    if let Some(e) = err.downcast_ref::<noisecine::Error>() {
        return match e.class() {
            ErrorClass::Shape => 4,
            ErrorClass::Range => 5,
            ErrorClass::Format => 6,
            ErrorClass::Numeric => 7,
            ErrorClass::Backend => 8,
            ErrorClass::Io => 9,
        };
    }
    if err.downcast_ref::<noisecine::BackendError>().is_some() {
        return 8;
    }
    if err.downcast_ref::<image::ImageError>().is_some() {
        return 6;
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 9;
    }
    1
}

fn class_name(err: &anyhow::Error) -> &'static str {
    match exit_code(err) {
        3 => "config",
        4 => "shape",
        5 => "range",
        6 => "format",
        7 => "numeric",
        8 => "backend",
        9 => "io",
        _ => "other",
    }
}

fn open_backend(
    args: &BackendArgs,
    from_config: Option<&BackendConfig>,
) -> Result<Box<dyn Backend>> {
    let kind = args.backend.unwrap_or(match from_config {
        Some(BackendConfig::Bridge { .. }) => BackendKind::Bridge,
        _ => BackendKind::Mock,
    });
    Ok(match kind {
        BackendKind::Mock => Box::new(MockBackend::default()),
        BackendKind::Bridge => {
            let cmd = match (&args.bridge_cmd, from_config) {
                (Some(c), _) => c.clone(),
                (None, Some(BackendConfig::Bridge { command })) => command.clone(),
                _ => bail!(ConfigError {
                    key: "backend.command".into(),
                    message: "bridge backend needs --bridge-cmd or backend.command".into(),
                }),
            };
            Box::new(BridgeBackend::spawn(&cmd)?)
        }
    })
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.png")
}

/// Resolve relative paths against the config file's directory.
fn rebase(cfg: &mut SceneConfig, base: &Path) {
    let fix = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    for p in [
        &mut cfg.segmap,
        &mut cfg.flow_map,
        &mut cfg.source,
        &mut cfg.mask,
    ]
    .into_iter()
    .flatten()
    {
        fix(p);
    }
    cfg.inputs
        .iter_mut()
        .chain(cfg.flows.iter_mut())
        .for_each(fix);
    for l in &mut cfg.layers {
        fix(&mut l.image);
        for p in [&mut l.alpha, &mut l.flow_map].into_iter().flatten() {
            fix(p);
        }
    }
}

fn load_config(path: &Path, frames: Option<usize>) -> Result<SceneConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = SceneConfig::parse(&text)?;
    let path = std::path::absolute(path)?;
    rebase(&mut cfg, path.parent().unwrap_or(Path::new("/")));
    if let Some(f) = frames {
        cfg.frames = f;
    }
    if let Ok(s) = std::env::var("NOISECINE_SEED") {
        cfg.seed = s.trim().parse().map_err(|_| ConfigError {
            key: "NOISECINE_SEED".into(),
            message: format!("{s:?} is not an unsigned integer"),
        })?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(
    config: &Path,
    out: &Path,
    backend: &BackendArgs,
    dump_latents: bool,
    frames: Option<usize>,
) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let started = Instant::now();
    let mut seeds = Seeds::new();
    let mut cfg_echo = serde_json::Value::Null;
    let mut written = vec![];
    let mut ledger = serde_json::Value::Null;
    let mut warnings = vec![];

    let result = (|| -> Result<()> {
        let cfg = load_config(config, frames)?;
        cfg_echo = serde_json::to_value(&cfg)?;
        let mut b = open_backend(backend, cfg.backend.as_ref())?;
        let gen = execute(&cfg, &mut *b, &mut seeds)?;
        ledger = serde_json::to_value(&gen.ledger)?;
        warnings = gen.warnings.clone();
        for (i, frame) in gen.frames.iter().enumerate() {
            save_rgb(&out.join(frame_name(i)), frame)?;
            written.push(frame_name(i));
        }
        if dump_latents {
            let dir = out.join("latents");
            fs::create_dir_all(&dir)?;
            for (i, l) in gen.latents.iter().enumerate() {
                write_latent(dir.join(format!("frame_{i:04}.nclf")), l)?;
            }
        }
        Ok(())
    })();

    let error = result
        .as_ref()
        .err()
        .map(|e| json!({ "class": class_name(e), "message": format!("{e:#}") }));
    let manifest = json!({
        "config": cfg_echo,
        "seeds": seeds,
        "prefix_calls": ledger.get("prefix_calls"),
        "ledger": ledger,
        "frames": written,
        "warnings": warnings,
        "timings": { "total_ms": started.elapsed().as_secs_f64() * 1e3 },
        "error": error,
    });
    fs::write(
        out.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    result
}

fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_metric(dir: &Path, rows: &[usize], out: Option<&Path>) -> Result<()> {
    let frames = png_files(dir)?
        .iter()
        .map(|p| load_rgb(p))
        .collect::<Result<Vec<_>>>()?;
    let rows = if rows.is_empty() {
        default_rows(frames.first().map_or(1, |f| f.height()), DEFAULT_ROWS)
    } else {
        rows.to_vec()
    };
    let report = video_smoothness(&frames, Some(&rows))?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(out) = out {
        fs::create_dir_all(out)?;
        fs::write(out.join("report.json"), &text)?;
        save_rgb(
            &out.join("montage.png"),
            &slice_montage(&extract_slices(&frames, &rows)?)?,
        )?;
    }
    Ok(())
}

fn cmd_preview(latent: &Path, colormap: Option<&Path>, out: &Path) -> Result<()> {
    let map = match colormap {
        Some(p) => ColorMap34::from_json(&fs::read_to_string(p)?)?,
        None => ColorMap34::default(),
    };
    let x = read_latent(latent)?;
    save_rgb(out, &apply_colormap(&x, &map)?)
}

fn cmd_fit(dir: &Path, out: &Path) -> Result<()> {
    let mut pairs = vec![];
    let mut latents: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "nclf"))
        .collect();
    latents.sort();
    for l in latents {
        let png = l.with_extension("png");
        if !png.exists() {
            bail!("{} has no matching {}", l.display(), png.display());
        }
        pairs.push((read_latent(&l)?, load_rgb(&png)?));
    }
    let map = fit_colormap(&pairs)?;
    fs::write(out, map.to_json())?;
    println!("{}", map.to_json());
    Ok(())
}

fn cmd_probe(
    image: &Path,
    out: &Path,
    backend: &BackendArgs,
    dx: i64,
    dy: i64,
    rounds: usize,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let img = load_rgb(image)?;
    let mut b = open_backend(backend, None)?;
    let rolled = probe_roll(&mut *b, &img, dx, dy)?;
    save_rgb(&out.join("roll.png"), &hstack(&[img.clone(), rolled])?)?;
    let stages = probe_idempotency(&mut *b, &img, rounds)?;
    save_rgb(&out.join("idempotency.png"), &hstack(&stages)?)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            out,
            backend,
            dump_latents,
            frames,
        } => cmd_run(config, out, backend, *dump_latents, *frames),
        Command::Metric { frames, rows, out } => cmd_metric(frames, rows, out.as_deref()),
        Command::LatentPreview {
            latent,
            colormap,
            out,
        } => cmd_preview(latent, colormap.as_deref(), out),
        Command::FitColormap { pairs, out } => cmd_fit(pairs, out),
        Command::ProbeVae {
            image,
            out,
            backend,
            dx,
            dy,
            rounds,
        } => cmd_probe(image, out, backend, *dx, *dy, *rounds),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error ({}): {e:#}", class_name(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
