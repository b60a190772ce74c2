//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fail. Everything runs against the mock backend.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use noisecine::crystal::{
    apply_transform, roll, CrystalOp, CrystalTransform, LatticeShift, MosaicPiece, RegionMosaic,
    RowShiftProfile,
};
use noisecine::latentvis::{apply_colormap, fit_colormap, ColorMap34};
use noisecine::liquid::{
    adjust_kurtosis, match_stats, reduce_variance, render_flow_map, Displacement, FlowCalibration,
    FlowField, KurtosisSpec, MotionPrimitive, VarianceReductionSpec,
};
use noisecine::metric::{slice_smoothness, video_smoothness, XTSlice};
use noisecine::noise::GaussianStream;
use noisecine::pipeline::{
    generate_crystal, generate_liquid, image_to_video, motion_compensated_residual,
    seamless_upscale, vid2vid_tracked, CrystalOptions, DenoiseSchedule, LiquidOptions, MockBackend,
    Scene, TrackingOptions, Window,
};
use noisecine::{sample_noise, ImageField, LatentField, Lattice, Mask, SeededNoiseSpec};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)*) => {
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !$cond {
            return Err(format!($($msg)*));
        }
    };
}

fn noise(seed: u64, c: usize, h: usize, w: usize) -> LatentField {
    sample_noise(&SeededNoiseSpec::new(seed, [c, h, w])).unwrap()
}

fn sorted_bits(x: &LatentField, c: usize) -> Vec<u32> {
    let mut v: Vec<u32> = x.channel(c).iter().map(|v| v.to_bits()).collect();
    v.sort_unstable();
    v
}

fn random_transform(rng: &mut StdRng, h: usize, w: usize) -> CrystalTransform {
    let (hi, wi) = (h as i64, w as i64);
    let shifts = (0..h).map(|_| rng.random_range(-wi..=wi)).collect();
    // left and right halves trade places
    let half = w / 2;
    let left = Mask::from_fn(h, w, |_, x| x < half).unwrap();
    let right = Mask::from_fn(h, w, |_, x| x >= half).unwrap();
    let dy = rng.random_range(-hi..=hi);
    let whole = Mask::from_fn(h, w, |_, _| true).unwrap();
    CrystalTransform {
        ops: vec![
            CrystalOp::Roll(LatticeShift::wrapped(
                rng.random_range(-2 * wi..=2 * wi),
                rng.random_range(-2 * hi..=2 * hi),
            )),
            CrystalOp::Glide(RowShiftProfile { shifts, wrap: true }),
            CrystalOp::Mosaic(RegionMosaic {
                pieces: vec![
                    MosaicPiece {
                        mask: left,
                        dx: (w - half) as i64,
                        dy: 0,
                        wrap: true,
                    },
                    MosaicPiece {
                        mask: right,
                        dx: -(half as i64),
                        dy: 0,
                        wrap: true,
                    },
                ],
            }),
            CrystalOp::Mosaic(RegionMosaic {
                pieces: vec![MosaicPiece {
                    mask: whole,
                    dx: 0,
                    dy,
                    wrap: true,
                }],
            }),
        ],
    }
}

fn permutation_exactness() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    for i in 0..1000 {
        let (h, w) = (rng.random_range(2..24), rng.random_range(2..24));
        let x = noise(i, 4, h, w);
        let t = random_transform(&mut rng, h, w);
        // each op alone and the full chain
        let singles = t.ops.iter().map(|op| CrystalTransform {
            ops: vec![op.clone()],
        });
        for tr in singles.chain(std::iter::once(t.clone())) {
            let y = apply_transform(&x, &tr, None).map_err(|e| e.to_string())?;
            for c in 0..4 {
                check!(
                    sorted_bits(&x, c) == sorted_bits(&y, c),
                    "latent {i} channel {c} multiset changed"
                );
            }
        }
    }
    Ok("1000 latents, roll/glide/mosaic and chains".into())
}

fn equivariance() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    let mut worst = 0.0f32;
    for k in 0..10 {
        let (lh, lw) = (rng.random_range(4..10), rng.random_range(4..12));
        let (dx, dy) = (rng.random_range(-3..=3), rng.random_range(-2..=2));
        let switch = rng.random_range(0.3..0.95);
        let scene = Scene {
            prompt: format!("scene {k}"),
            segmap: None,
            noise: noise(100 + k, 4, lh, lw),
        };
        let transforms: Vec<_> = (0..5i64)
            .map(|f| CrystalTransform::roll(LatticeShift::wrapped(dx * f, dy * f)))
            .collect();
        let schedule = DenoiseSchedule::new(rng.random_range(5..25), switch).unwrap();
        let g = generate_crystal(
            MockBackend::default(),
            &scene,
            &schedule,
            &transforms,
            &CrystalOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        for f in 1..5i64 {
            let want = roll(
                &g.frames[0],
                &LatticeShift::wrapped(8 * dx * f, 8 * dy * f),
                None,
            )
            .unwrap();
            worst = worst.max(g.frames[f as usize].max_abs_diff(&want));
        }
    }
    check!(worst <= 1e-6, "max pixel error {worst}");
    Ok(format!("10 scenes, max pixel error {worst:e}"))
}

fn prefix_reuse() -> Outcome {
    let schedule = DenoiseSchedule::new(20, 0.7).unwrap();
    let (n, switch) = (schedule.total_steps(), schedule.switch_level());
    for frames in [1i64, 4, 16] {
        let mut mock = MockBackend::default();
        let scene = Scene {
            prompt: "p".into(),
            segmap: None,
            noise: noise(3, 4, 6, 8),
        };
        let transforms: Vec<_> = (0..frames)
            .map(|f| CrystalTransform::roll(LatticeShift::wrapped(f, 0)))
            .collect();
        let g = generate_crystal(
            &mut mock,
            &scene,
            &schedule,
            &transforms,
            &CrystalOptions::default(),
        )
        .map_err(|e| e.to_string())?;
        let raw = mock
            .calls
            .denoise
            .iter()
            .filter(|&&c| c == (n, switch))
            .count();
        check!(
            g.ledger.prefix_calls == 1,
            "F={frames}: ledger says {} prefix calls",
            g.ledger.prefix_calls
        );
        check!(raw == 1, "F={frames}: backend saw {raw} prefix segments");
        check!(
            g.ledger.suffix_calls == frames as usize,
            "F={frames}: {} suffix calls",
            g.ledger.suffix_calls
        );
    }
    Ok("F in {1, 4, 16}: one prefix segment each".into())
}

fn statistical_closure() -> Outcome {
    let flow = FlowField::uniform(48, 64, MotionPrimitive::periodic(0.7, 6.0, 10.0, 0.0));
    let scene = Scene {
        prompt: "sea".into(),
        segmap: None,
        noise: noise(4, 4, 6, 8),
    };
    let g = generate_liquid(
        MockBackend::default(),
        &scene,
        &DenoiseSchedule::new(12, 0.8).unwrap(),
        &flow,
        8,
        &LiquidOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let recorded = g.recorded_stats.as_ref().ok_or("no recorded stats")?;
    check!(
        g.matched_stats.len() == 8,
        "{} matched frames",
        g.matched_stats.len()
    );
    let stat_err = g
        .matched_stats
        .iter()
        .map(|m| m.max_abs_diff(recorded))
        .fold(0.0, f64::max);
    check!(stat_err <= 1e-6, "matched stats off by {stat_err}");

    let mut round_trip = 0.0f32;
    for seed in 0..20 {
        let x = noise(200 + seed, 4, 16, 16).map(|v| 0.8 * v + 0.1);
        let (reduced, stats) = reduce_variance(&x, &VarianceReductionSpec::new(0.6)).unwrap();
        let back = match_stats(&reduced, &stats).unwrap();
        round_trip = round_trip.max(back.max_abs_diff(&x));
    }
    check!(round_trip <= 1e-5, "round trip error {round_trip}");
    Ok(format!(
        "stats error {stat_err:e}, round trip error {round_trip:e}"
    ))
}

fn excess_kurtosis(v: &[f32]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().map(|&x| x as f64).sum::<f64>() / n;
    let m2 = v.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|&x| (x as f64 - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}

fn kurtosis_transform() -> Outcome {
    let x = noise(5, 1, 1000, 1000);
    let identity = adjust_kurtosis(
        &x,
        &KurtosisSpec {
            delta: 1.0,
            enabled: true,
        },
    )
    .unwrap();
    let id_err = x
        .data()
        .iter()
        .zip(identity.data())
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .fold(0.0, f64::max);
    check!(id_err <= 1e-9, "delta 1 moved values by {id_err}");
    let fat = adjust_kurtosis(
        &x,
        &KurtosisSpec {
            delta: 1.5,
            enabled: true,
        },
    )
    .unwrap();
    let (before, after) = (excess_kurtosis(x.data()), excess_kurtosis(fat.data()));
    check!(after > before, "excess kurtosis {before} -> {after}");
    Ok(format!(
        "identity error {id_err:e}, excess kurtosis {before:.4} -> {after:.4}"
    ))
}

fn color_map() -> Outcome {
    let m = ColorMap34::default();
    check!(m.biases == [123.54, 111.48, 98.52], "biases {:?}", m.biases);
    check!(
        m.rgb_f64([0.0; 4]) == [123.54, 111.48, 98.52],
        "zero latent maps to {:?}",
        m.rgb_f64([0.0; 4])
    );
    let zero = apply_colormap(&LatentField::zeros(4, 2, 3).unwrap(), &m).unwrap();
    check!(
        (0..2).all(|y| (0..3).all(|x| zero.pixel(y, x) == [123.54f32, 111.48, 98.52])),
        "zero latent image is not the biases"
    );

    let truth = ColorMap34 {
        weights: [
            [31.0, -12.5, 8.25, 4.0],
            [-6.0, 22.0, 15.5, -9.75],
            [11.0, 3.5, -27.0, 18.0],
        ],
        biases: [118.0, 104.5, 93.25],
    };
    let err = |fit: &ColorMap34| {
        let w = fit
            .weights
            .iter()
            .flatten()
            .zip(truth.weights.iter().flatten());
        let b = fit.biases.iter().zip(&truth.biases);
        w.chain(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let clean: Vec<_> = (0..4)
        .map(|s| {
            let x = noise(300 + s, 4, 40, 40);
            let img = apply_colormap(&x, &truth).unwrap();
            (x, img)
        })
        .collect();
    let clean_err = err(&fit_colormap(&clean).map_err(|e| e.to_string())?);
    check!(clean_err <= 1e-6, "noise-free fit error {clean_err}");

    // 1e5 pixels with unit-variance noise on every color channel
    let x = noise(400, 4, 250, 400);
    let mut stream = GaussianStream::new(401);
    let clean_img = apply_colormap(&x, &truth).unwrap();
    let noisy: Vec<f32> = clean_img
        .data()
        .iter()
        .map(|v| v + stream.next_normal() as f32)
        .collect();
    let img = ImageField::new(250, 400, noisy).unwrap();
    let noisy_err = err(&fit_colormap(&[(x, img)]).map_err(|e| e.to_string())?);
    check!(noisy_err <= 1e-2, "noisy fit error {noisy_err}");
    Ok(format!(
        "biases exact, fit error {clean_err:e} clean, {noisy_err:e} noisy"
    ))
}

/// Brute-force reference: per-pixel edge angle from the Sobel gradient,
/// folded to (-pi/2, pi/2), magnitude-weighted circular mean per row.
fn oracle_roughness(s: &XTSlice) -> f64 {
    let (tl, w) = (s.time() as i64, s.width() as i64);
    let v = |t: i64, x: i64| s.at(t.clamp(0, tl - 1) as usize, x.clamp(0, w - 1) as usize);
    let mut phi: Vec<f64> = vec![];
    for t in 1..tl - 1 {
        let (mut re, mut im) = (0.0, 0.0);
        for x in 0..w {
            let mut gt = 0.0;
            let mut gx = 0.0;
            for (k, wk) in [(-1, 1.0), (0, 2.0), (1, 1.0)] {
                gt += wk * (v(t + 1, x + k) - v(t - 1, x + k));
                gx += wk * (v(t + k, x + 1) - v(t + k, x - 1));
            }
            let r = gt.hypot(gx);
            if r < 1e-6 || gx == 0.0 {
                continue;
            }
            let mut theta = gx.atan2(gt) + FRAC_PI_2;
            while theta >= FRAC_PI_2 {
                theta -= PI;
            }
            while theta <= -FRAC_PI_2 {
                theta += PI;
            }
            re += r * theta.cos();
            im += r * theta.sin();
        }
        let prev = phi.last().copied().unwrap_or(0.0);
        phi.push(if re == 0.0 && im == 0.0 {
            prev
        } else {
            im.atan2(re)
        });
    }
    for i in 1..phi.len() {
        phi[i] -= TAU * ((phi[i] - phi[i - 1]) / TAU).round();
    }
    let d2: Vec<f64> = phi.windows(3).map(|p| p[2] - 2.0 * p[1] + p[0]).collect();
    let mean = d2.iter().sum::<f64>() / d2.len() as f64;
    (d2.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / d2.len() as f64).sqrt()
}

fn moving_slice(t: usize, w: usize, speed: f64) -> XTSlice {
    let data = (0..t)
        .flat_map(|t| {
            (0..w).map(move |x| 128.0 + 100.0 * (0.15 * (x as f64 - speed * t as f64)).sin())
        })
        .collect();
    XTSlice::new(t, w, data).unwrap()
}

fn metric_correctness() -> Outcome {
    let smooth = moving_slice(16, 512, 1.7);
    let score = slice_smoothness(&smooth).map_err(|e| e.to_string())?;
    check!(
        score.smoothness >= 0.999,
        "constant velocity scores {}",
        score.smoothness
    );

    let mut rng = StdRng::seed_from_u64(6);
    let mut order: Vec<usize> = (0..16).collect();
    order.shuffle(&mut rng);
    let shuffled = slice_smoothness(&smooth.permute_rows(&order).unwrap()).unwrap();
    check!(
        shuffled.smoothness < score.smoothness,
        "shuffled {} vs {}",
        shuffled.smoothness,
        score.smoothness
    );

    let mut oracle_err = 0.0f64;
    for _ in 0..100 {
        let (t, w) = (rng.random_range(5..=16), rng.random_range(8..=64));
        let data = (0..t * w).map(|_| rng.random_range(0.0..255.0)).collect();
        let s = XTSlice::new(t, w, data).unwrap();
        let got = slice_smoothness(&s).map_err(|e| e.to_string())?.roughness;
        oracle_err = oracle_err.max((got - oracle_roughness(&s)).abs());
    }
    check!(oracle_err <= 1e-6, "oracle mismatch {oracle_err}");

    let frames: Vec<ImageField> = (0..16)
        .map(|t| {
            ImageField::from_fn(64, 512, |y, x| {
                let v =
                    128.0 + 100.0 * (0.15 * (x as f32 - 1.7 * t as f32) + 0.05 * y as f32).sin();
                [v, v, v]
            })
            .unwrap()
        })
        .collect();
    let start = Instant::now();
    let report = video_smoothness(&frames, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    check!(report.slices.len() == 5, "{} slices", report.slices.len());
    check!(elapsed < 1.0, "16x512 x 5 rows took {elapsed:.3} s");
    Ok(format!(
        "smooth {:.6}, shuffled {:.4}, oracle error {oracle_err:e}, {:.1} ms",
        score.smoothness,
        shuffled.smoothness,
        elapsed * 1e3
    ))
}

fn overlap(
    a: &ImageField,
    ax: usize,
    b: &ImageField,
    bx: usize,
    cols: std::ops::Range<usize>,
) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for y in 0..a.height() {
        for x in cols.clone() {
            let (p, q) = (a.pixel(y, x - ax), b.pixel(y, x - bx));
            sum += (0..3).map(|c| (p[c] - q[c]).abs() as f64).sum::<f64>();
            n += 3;
        }
    }
    sum / n as f64
}

fn max_overlap(
    a: &ImageField,
    ax: usize,
    b: &ImageField,
    bx: usize,
    cols: std::ops::Range<usize>,
) -> f32 {
    let mut worst = 0.0f32;
    for y in 0..a.height() {
        for x in cols.clone() {
            let (p, q) = (a.pixel(y, x - ax), b.pixel(y, x - bx));
            worst = (0..3).map(|c| (p[c] - q[c]).abs()).fold(worst, f32::max);
        }
    }
    worst
}

fn seamless_upscaling() -> Outcome {
    let steps = 6;
    let schedule = DenoiseSchedule::new(steps, 0.7).unwrap();
    let canvas = noise(7, 4, 24, 96);
    let other = noise(8, 4, 24, 96);
    let win = |x| Window {
        x,
        y: 0,
        width: 512,
        height: 192,
    };
    let (left, right) = (win(0), win(256));
    let tracked = seamless_upscale(
        MockBackend::default(),
        "a city",
        &canvas,
        &[left, right],
        None,
        &schedule,
    )
    .map_err(|e| e.to_string())?;
    // receptive field grows one cell per step, keep that far from window edges
    let margin = steps * 8;
    let interior = 256 + margin..512 - margin;
    let same = max_overlap(
        &tracked.frames[0],
        0,
        &tracked.frames[1],
        256,
        interior.clone(),
    );
    check!(same <= 1e-6, "tracked overlap differs by {same}");

    let lone = seamless_upscale(
        MockBackend::default(),
        "a city",
        &other,
        &[right],
        None,
        &schedule,
    )
    .map_err(|e| e.to_string())?;
    let diff = overlap(&tracked.frames[0], 0, &lone.frames[0], 256, interior);
    check!(diff > 0.1, "independent noise differs by only {diff}");
    Ok(format!(
        "tracked max diff {same:e}, independent mean abs {diff:.3}"
    ))
}

fn blocky(h: usize, w: usize) -> ImageField {
    ImageField::from_fn(h, w, |y, x| {
        let (by, bx) = ((y / 8) as f32, (x / 8) as f32);
        [
            100.0 + 40.0 * (0.9 * bx).sin(),
            110.0 + 30.0 * (0.7 * by + 0.3 * bx).cos(),
            90.0 + 20.0 * (0.2 * bx * by).sin(),
        ]
    })
    .unwrap()
}

fn tracking_benefit() -> Outcome {
    let (h, w) = (32, 64);
    let schedule = DenoiseSchedule::new(10, 0.7).unwrap();
    let steps = vec![Displacement::uniform(h, w, 8.0, 0.0); 3];
    let flow = FlowField::uniform(h, w, MotionPrimitive::constant(0.0, 8.0));
    let img2vid = |track| {
        let g = image_to_video(
            MockBackend::default(),
            "p",
            &blocky(h, w),
            &flow,
            &schedule,
            0.7,
            4,
            &TrackingOptions { seed: 5, track },
        )
        .unwrap();
        motion_compensated_residual(&g.frames, &steps, true).unwrap()
    };
    let frames: Vec<_> = (0..4)
        .map(|f| roll(&blocky(h, w), &LatticeShift::wrapped(8 * f, 0), None).unwrap())
        .collect();
    let vid2vid = |track| {
        let g = vid2vid_tracked(
            MockBackend::default(),
            "p",
            &frames,
            &steps,
            &schedule,
            0.7,
            &TrackingOptions { seed: 4, track },
            true,
        )
        .unwrap();
        motion_compensated_residual(&g.frames, &steps, true).unwrap()
    };
    let (it, i_frozen) = (img2vid(true), img2vid(false));
    let (vt, vf) = (vid2vid(true), vid2vid(false));
    check!(it < i_frozen, "img2vid tracked {it} vs frozen {i_frozen}");
    check!(vt < vf, "vid2vid tracked {vt} vs frozen {vf}");
    Ok(format!(
        "img2vid {it:.4} < {i_frozen:.4}, vid2vid {vt:.4} < {vf:.4}"
    ))
}

fn png_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

fn cli_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let flow = FlowField::uniform(48, 64, MotionPrimitive::periodic(2.0, 5.0, 8.0, 0.0));
    let flow_png = render_flow_map(&flow, &FlowCalibration::default()).unwrap();
    let src = blocky(48, 64);
    for (name, img) in [("flow.png", &flow_png), ("src.png", &src)] {
        image::RgbImage::from_raw(64, 48, img.to_rgb8())
            .unwrap()
            .save(d.join(name))
            .unwrap();
    }
    let configs = [
        r#"{"method": "crystal", "seed": 11, "frames": 6, "size": {"width": 64, "height": 48},
            "schedule": {"steps": 12}, "crystal": {"pan": [1, 0], "shear": {"horizon": 2, "near": 1, "far": 0}}}"#,
        r#"{"method": "liquid", "seed": 12, "frames": 5, "size": {"width": 64, "height": 48},
            "schedule": {"steps": 12, "switch": 0.8}, "flow_map": "flow.png",
            "liquid": {"inject_strength": 0.1, "kurtosis_delta": 1.2}}"#,
        r#"{"method": "img2vid", "seed": 13, "frames": 4, "strength": 0.6, "schedule": {"steps": 12},
            "source": "src.png", "flow_map": "flow.png"}"#,
    ];
    let mut total = 0;
    for (i, body) in configs.iter().enumerate() {
        let cfg = d.join(format!("c{i}.json"));
        fs::write(&cfg, body).unwrap();
        let mut runs = vec![];
        for r in 0..2 {
            let out = d.join(format!("out{i}_{r}"));
            let status = Command::new(env!("CARGO_BIN_EXE_noisecine"))
                .args([
                    "run",
                    "--config",
                    cfg.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ])
                .env_remove("NOISECINE_SEED")
                .output()
                .map_err(|e| e.to_string())?;
            check!(
                status.status.success(),
                "config {i}: {}",
                String::from_utf8_lossy(&status.stderr)
            );
            runs.push(png_bytes(&out));
        }
        check!(!runs[0].is_empty(), "config {i} wrote no frames");
        check!(runs[0] == runs[1], "config {i} frames differ between runs");
        total += runs[0].len();
    }
    Ok(format!("3 configs, {total} frames byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("permutation exactness", permutation_exactness),
        ("equivariance", equivariance),
        ("prefix reuse", prefix_reuse),
        ("statistical closure", statistical_closure),
        ("kurtosis transform", kurtosis_transform),
        ("color map", color_map),
        ("metric correctness", metric_correctness),
        ("seamless upscaling", seamless_upscaling),
        ("noise tracking benefit", tracking_benefit),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let text = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {text}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
