//! Latent-space visualisation.
//!
//! A 3×4 affine map takes the four latent channels of a cell straight to
//! RGB at latent resolution. The bundled default is the regression fitted
//! for Stable Diffusion v1.5's autoencoder; [`fit_colormap`] refits it from
//! (latent, image) pairs in closed form.

use nalgebra::{Matrix5, Matrix5x3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::crystal::{roll, LatticeShift};
use crate::error::{Error, Result};
use crate::field::{ImageField, LatentField, Lattice, LATENT_CHANNELS};
use crate::pipeline::Backend;

const DEFAULT_JSON: &str = include_str!("../assets/colormap_default.json");

/// Affine latent→RGB map: `rgb = weights · latent + biases` (0–255 scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorMap34 {
    pub weights: [[f64; 4]; 3],
    pub biases: [f64; 3],
}

impl Default for ColorMap34 {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_JSON).expect("bundled color map parses")
    }
}

impl ColorMap34 {
    pub fn from_json(s: &str) -> Result<Self> {
        let map: ColorMap34 =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("color map: {e}")))?;
        if map
            .weights
            .iter()
            .flatten()
            .chain(&map.biases)
            .any(|v| !v.is_finite())
        {
            return Err(Error::Format("color map has non-finite entries".into()));
        }
        Ok(map)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serialises")
    }

    /// RGB of one latent cell in `f64`, unclamped.
    pub fn rgb_f64(&self, latent: [f64; 4]) -> [f64; 3] {
        std::array::from_fn(|r| {
            let mut v = self.biases[r];
            for (c, &l) in latent.iter().enumerate() {
                v += self.weights[r][c] * l;
            }
            v
        })
    }

    /// RGB of one latent cell, unclamped.
    pub fn rgb(&self, latent: [f32; 4]) -> [f32; 3] {
        self.rgb_f64(latent.map(|v| v as f64)).map(|v| v as f32)
    }

    /// Largest absolute entry of each weight column.
    pub fn column_peaks(&self) -> [f64; 4] {
        std::array::from_fn(|c| (0..3).map(|r| self.weights[r][c].abs()).fold(0.0, f64::max))
    }
}

/// Color-map a latent at its own resolution. Values are not clamped; they
/// are clamped to `[0, 255]` when emitted (see [`ImageField::to_rgb8`]).
pub fn apply_colormap(x: &LatentField, m: &ColorMap34) -> Result<ImageField> {
    let [c, h, w] = x.shape();
    if c != LATENT_CHANNELS {
        return Err(Error::mismatch(LATENT_CHANNELS, c));
    }
    ImageField::from_fn(h, w, |y, col| {
        m.rgb(std::array::from_fn(|ch| x.get(ch, y, col)))
    })
}

/// Least-squares fit of a [`ColorMap34`] over every cell of every pair.
///
/// Images may be at latent resolution or any integer multiple of it; larger
/// images are box-averaged down first.
pub fn fit_colormap(pairs: &[(LatentField, ImageField)]) -> Result<ColorMap34> {
    if pairs.is_empty() {
        return Err(Error::TooFew { needed: 1, got: 0 });
    }
    // normal equations over design rows [l0, l1, l2, l3, 1]
    let mut gram = Matrix5::<f64>::zeros();
    let mut rhs = Matrix5x3::<f64>::zeros();
    let mut sums = [0.0f64; 4];
    let mut squares = [0.0f64; 4];
    let mut n = 0usize;
    for (latent, image) in pairs {
        let [c, h, w] = latent.shape();
        if c != LATENT_CHANNELS {
            return Err(Error::mismatch(LATENT_CHANNELS, c));
        }
        let [ih, iw, _] = image.shape();
        if ih % h != 0 || iw % w != 0 || ih / h != iw / w {
            return Err(Error::mismatch((h, w), (ih, iw)));
        }
        let small = if ih == h {
            image.clone()
        } else {
            image.box_downscale(ih / h)?
        };
        for y in 0..h {
            for x in 0..w {
                let mut row = [1.0f64; 5];
                for ch in 0..4 {
                    row[ch] = latent.get(ch, y, x) as f64;
                    sums[ch] += row[ch];
                    squares[ch] += row[ch] * row[ch];
                }
                let rgb = small.pixel(y, x);
                for i in 0..5 {
                    for j in 0..5 {
                        gram[(i, j)] += row[i] * row[j];
                    }
                    for k in 0..3 {
                        rhs[(i, k)] += row[i] * rgb[k] as f64;
                    }
                }
                n += 1;
            }
        }
    }
    let nf = n as f64;
    let variances: [f64; 4] = std::array::from_fn(|c| {
        let mean = sums[c] / nf;
        (squares[c] / nf - mean * mean).max(0.0)
    });
    // scale-free rank test on the correlation-normalised Gram matrix
    let d = nalgebra::Vector5::from_fn(|i, _| gram[(i, i)].sqrt().max(f64::MIN_POSITIVE));
    let normalised = Matrix5::from_fn(|i, j| gram[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(normalised);
    let pivot = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if pivot < 1e-10 {
        return Err(Error::Singular { pivot, variances });
    }
    let chol = gram
        .cholesky()
        .ok_or(Error::Singular { pivot, variances })?;
    let sol = chol.solve(&rhs);
    Ok(ColorMap34 {
        weights: std::array::from_fn(|r| std::array::from_fn(|c| sol[(c, r)])),
        biases: std::array::from_fn(|r| sol[(4, r)]),
    })
}

/// Encode, roll the latent by whole cells, decode.
pub fn probe_roll<B: Backend + ?Sized>(
    backend: &mut B,
    image: &ImageField,
    dx: i64,
    dy: i64,
) -> Result<ImageField> {
    let latent = backend.encode(image).map_err(Error::backend(None))?;
    let rolled = roll(&latent, &LatticeShift::wrapped(dx, dy), None)?;
    backend.decode(&rolled).map_err(Error::backend(None))
}

/// `k` encode/decode round trips; element 0 is the input, element `i` the
/// image after `i` trips.
pub fn probe_idempotency<B: Backend + ?Sized>(
    backend: &mut B,
    image: &ImageField,
    k: usize,
) -> Result<Vec<ImageField>> {
    let mut stages = vec![image.clone()];
    for i in 0..k {
        let latent = backend.encode(&stages[i]).map_err(Error::backend(None))?;
        stages.push(backend.decode(&latent).map_err(Error::backend(None))?);
    }
    Ok(stages)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{sample_noise, GaussianStream, SeededNoiseSpec};
    use crate::pipeline::MockBackend;
    use proptest::prelude::*;

    fn synthetic() -> ColorMap34 {
        ColorMap34 {
            weights: [
                [12.5, -3.0, 7.25, 0.5],
                [-8.0, 20.0, 1.0, -4.5],
                [3.0, 3.0, -15.0, 9.0],
            ],
            biases: [90.0, 120.0, 60.0],
        }
    }

    fn pairs(
        map: &ColorMap34,
        n: usize,
        side: usize,
        pixel_sigma: f64,
    ) -> Vec<(LatentField, ImageField)> {
        let mut stream = GaussianStream::new(0xC0105);
        (0..n)
            .map(|i| {
                let l = sample_noise(&SeededNoiseSpec::new(i as u64, [4, side, side])).unwrap();
                let mut img = apply_colormap(&l, map).unwrap();
                let noisy: Vec<f32> = img
                    .data()
                    .iter()
                    .map(|&v| (v as f64 + pixel_sigma * stream.next_normal()) as f32)
                    .collect();
                img = ImageField::new(side, side, noisy).unwrap();
                (l, img)
            })
            .collect()
    }

    fn max_param_error(a: &ColorMap34, b: &ColorMap34) -> f64 {
        a.weights
            .iter()
            .flatten()
            .zip(b.weights.iter().flatten())
            .chain(a.biases.iter().zip(&b.biases))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn default_map_matches_bundle() {
        let m = ColorMap34::default();
        assert_eq!(m.weights[0], [43.89, 16.35, -35.44, -21.61]);
        assert_eq!(m.weights[1], [29.65, 44.57, 32.10, -29.15]);
        assert_eq!(m.weights[2], [36.27, 5.53, 28.26, -82.53]);
        assert_eq!(m.biases, [123.54, 111.48, 98.52]);
    }

    #[test]
    fn zero_latent_gives_biases() {
        let img = apply_colormap(
            &LatentField::zeros(4, 3, 3).unwrap(),
            &ColorMap34::default(),
        )
        .unwrap();
        for y in 0..3 {
            for x in 0..3 {
                assert_eq!(img.pixel(y, x), [123.54f32, 111.48, 98.52]);
            }
        }
    }

    #[test]
    fn unit_channel_zero() {
        let mut l = LatentField::zeros(4, 1, 1).unwrap();
        l.channel_mut(0)[0] = 1.0;
        let px = apply_colormap(&l, &ColorMap34::default())
            .unwrap()
            .pixel(0, 0);
        let want = [123.54 + 43.89, 111.48 + 29.65, 98.52 + 36.27];
        for c in 0..3 {
            assert!((px[c] as f64 - want[c]).abs() < 1e-4);
        }
    }

    #[test]
    fn zero_map_is_black() {
        let m = ColorMap34 {
            weights: [[0.0; 4]; 3],
            biases: [0.0; 3],
        };
        let l = sample_noise(&SeededNoiseSpec::new(1, [4, 4, 4])).unwrap();
        assert_eq!(apply_colormap(&l, &m).unwrap().to_rgb8(), vec![0u8; 48]);
    }

    #[test]
    fn wrong_channel_count() {
        let l = LatentField::zeros(3, 2, 2).unwrap();
        assert!(matches!(
            apply_colormap(&l, &ColorMap34::default()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn no_useless_channel_in_default_map() {
        assert!(ColorMap34::default()
            .column_peaks()
            .iter()
            .all(|&p| p > 5.0));
    }

    #[test]
    fn json_round_trip() {
        let m = ColorMap34::default();
        assert_eq!(ColorMap34::from_json(&m.to_json()).unwrap(), m);
        assert!(ColorMap34::from_json(r#"{"weights": [[1,2,3,4]], "biases": [1,2,3]}"#).is_err());
    }

    #[test]
    fn fit_exact() {
        let m = synthetic();
        let fitted = fit_colormap(&pairs(&m, 3, 16, 0.0)).unwrap();
        assert!(max_param_error(&fitted, &m) < 1e-6, "{fitted:?}");
    }

    #[test]
    fn fit_from_full_resolution_images() {
        let m = synthetic();
        let full: Vec<_> = pairs(&m, 2, 8, 0.0)
            .into_iter()
            .map(|(l, img)| (l, img.upscale_nearest(8)))
            .collect();
        assert!(max_param_error(&fit_colormap(&full).unwrap(), &m) < 1e-6);
    }

    #[test]
    fn fit_noisy() {
        // 10 pairs of 100x100 = 1e5 pixels, sigma 1 on every RGB value
        let m = synthetic();
        let fitted = fit_colormap(&pairs(&m, 10, 100, 1.0)).unwrap();
        let err = max_param_error(&fitted, &m);
        assert!(err < 1e-2, "{err}");
    }

    #[test]
    fn constant_latent_is_singular() {
        let l = LatentField::from_fn(4, 8, 8, |c, _, _| c as f32).unwrap();
        let img = apply_colormap(&l, &ColorMap34::default()).unwrap();
        let err = fit_colormap(&[(l, img)]).unwrap_err();
        match err {
            Error::Singular { variances, .. } => assert_eq!(variances, [0.0; 4]),
            other => panic!("expected singularity, got {other:?}"),
        }
    }

    #[test]
    fn collinear_channels_are_singular() {
        let base = sample_noise(&SeededNoiseSpec::new(1, [4, 8, 8])).unwrap();
        let l = LatentField::from_fn(4, 8, 8, |c, y, x| {
            if c == 3 {
                2.0 * base.get(0, y, x)
            } else {
                base.get(c, y, x)
            }
        })
        .unwrap();
        let img = apply_colormap(&l, &synthetic()).unwrap();
        assert!(matches!(
            fit_colormap(&[(l, img)]),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn probes_on_mock() {
        let mut mock = MockBackend::default();
        // block-constant image: exactly representable at latent resolution
        let small = apply_colormap(
            &sample_noise(&SeededNoiseSpec::new(3, [4, 4, 4]))
                .unwrap()
                .map(|v| 0.5 * v),
            &ColorMap34::default(),
        )
        .unwrap();
        let img = small.upscale_nearest(8);
        let stages = probe_idempotency(&mut mock, &img, 0).unwrap();
        assert_eq!(stages, vec![img.clone()]);
        let stages = probe_idempotency(&mut mock, &img, 3).unwrap();
        assert_eq!(stages.len(), 4);
        for s in &stages[1..] {
            assert!(s.max_abs_diff(&img) < 1e-4, "{}", s.max_abs_diff(&img));
            assert!(s.max_abs_diff(&stages[1]) < 1e-5);
        }
        let rolled = probe_roll(&mut mock, &img, 1, 0).unwrap();
        let latent = mock.encode(&img).unwrap();
        let reference = roll(
            &mock.decode(&latent).unwrap(),
            &LatticeShift::wrapped(8, 0),
            None,
        )
        .unwrap();
        assert!(rolled.max_abs_diff(&reference) < 1e-5);
    }

    proptest! {
        #[test]
        fn colormap_is_affine(seed in any::<u64>(), a in -4.0f32..4.0) {
            let m = ColorMap34::default();
            let x = sample_noise(&SeededNoiseSpec::new(seed, [4, 3, 3])).unwrap();
            for y in 0..3 {
                for col in 0..3 {
                    let cell: [f64; 4] = std::array::from_fn(|c| x.get(c, y, col) as f64);
                    let p = m.rgb_f64(cell);
                    let q = m.rgb_f64(cell.map(|v| a as f64 * v));
                    for c in 0..3 {
                        let lhs = q[c] - m.biases[c];
                        let rhs = a as f64 * (p[c] - m.biases[c]);
                        prop_assert!((lhs - rhs).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
