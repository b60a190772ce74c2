use crate::error::{Error, Result};
use crate::field::Lattice;
use crate::liquid::flow::Displacement;

/// Backward nearest-neighbour warp: output pixel `p` takes the value at
/// `round(p − d(p))`. Without wrap, pixels whose source falls off the grid
/// keep their own value. No blending, so every output value is an input
/// value.
pub fn warp<L: Lattice>(x: &L, disp: &Displacement, wrap_x: bool, wrap_y: bool) -> Result<L> {
    let (c, h, w) = x.dims();
    if (disp.height, disp.width) != (h, w) {
        return Err(Error::mismatch((h, w), (disp.height, disp.width)));
    }
    let mut out = x.clone();
    for y in 0..h {
        for col in 0..w {
            let (dx, dy) = disp.at(y, col);
            let sx = (col as f32 - dx).round() as i64;
            let sy = (y as f32 - dy).round() as i64;
            let sx = if wrap_x {
                Some(sx.rem_euclid(w as i64) as usize)
            } else {
                (0..w as i64).contains(&sx).then_some(sx as usize)
            };
            let sy = if wrap_y {
                Some(sy.rem_euclid(h as i64) as usize)
            } else {
                (0..h as i64).contains(&sy).then_some(sy as usize)
            };
            if let (Some(sx), Some(sy)) = (sx, sy) {
                for ch in 0..c {
                    let i = out.offset(ch, y, col);
                    out.values_mut()[i] = x.get(ch, sy, sx);
                }
            }
        }
    }
    Ok(out)
}
