use std::path::Path;

use anyhow::{Context, Result};

use noisecine::field::{ImageField, Mask, Plane};
use noisecine::Lattice;

pub fn load_rgb(path: &Path) -> Result<ImageField> {
    let img = image::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(ImageField::from_rgb8(h as usize, w as usize, img.as_raw())?)
}

pub fn load_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let img = image::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok((h as usize, w as usize, img.into_raw()))
}

pub fn load_mask(path: &Path) -> Result<Mask> {
    let (h, w, g) = load_gray(path)?;
    Ok(Mask::from_gray8(h, w, &g)?)
}

/// Alpha plane from a grayscale PNG, 255 opaque.
pub fn load_alpha(path: &Path) -> Result<Plane> {
    let (h, w, g) = load_gray(path)?;
    Ok(Plane::new(
        h,
        w,
        g.iter().map(|&v| v as f32 / 255.0).collect(),
    )?)
}

pub fn save_rgb(path: &Path, img: &ImageField) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.to_rgb8())
        .context("image buffer size")?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .with_context(|| format!("writing {}", path.display()))
}

/// Images side by side, left to right.
pub fn hstack(images: &[ImageField]) -> Result<ImageField> {
    let h = images.first().map_or(0, |i| i.height());
    let widths: Vec<usize> = images.iter().map(|i| i.width()).collect();
    anyhow::ensure!(images.iter().all(|i| i.height() == h), "heights differ");
    let total = widths.iter().sum();
    Ok(ImageField::from_fn(h, total, |y, mut x| {
        for img in images {
            if x < img.width() {
                return img.pixel(y, x);
            }
            x -= img.width();
        }
        unreachable!("x within total width")
    })?)
}
