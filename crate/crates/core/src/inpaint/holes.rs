use crate::error::{Error, Result};
use crate::geometry::PartialView;
use crate::grid::{ColorImage, Grid, Mask};

use super::telea::telea_inpaint;

pub const CLOSING_KERNEL: usize = 5;
const TELEA_RADIUS: usize = 5;

/// Max (dilate) or min (erode) of a binary image over a square window.
/// Out-of-bounds samples are ignored.
fn morph(src: &Mask, radius: usize, dilate: bool) -> Mask {
    let (w, h) = src.dims();
    let pass = |get: &dyn Fn(usize, usize) -> bool, horizontal: bool| -> Mask {
        Grid::from_fn(w, h, |x, y| {
            let (c, len) = if horizontal { (x, w) } else { (y, h) };
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(len - 1);
            let mut it = (lo..=hi).map(|i| if horizontal { get(i, y) } else { get(x, i) });
            if dilate {
                it.any(|b| b)
            } else {
                it.all(|b| b)
            }
        })
    };
    let rows = pass(&|x, y| *src.get(x, y), true);
    pass(&|x, y| *rows.get(x, y), false)
}

/// Binary morphological closing with a `kernel × kernel` square.
pub fn closing(mask: &Mask, kernel: usize) -> Mask {
    let r = kernel / 2;
    morph(&morph(mask, r, true), r, false)
}

/// Fills holes that vanish under a 5×5 closing of the context region with
/// fast-marching inpainting. Returns the filled color image and the mask of
/// the remaining (large) holes.
pub fn fill_small_holes(view: &PartialView, mask: &Mask) -> Result<(ColorImage, Mask)> {
    if !view.rgb.same_dims(mask) {
        return Err(Error::ShapeMismatch("view vs mask".into()));
    }
    let context = mask.invert();
    let closed = closing(&context, CLOSING_KERNEL);
    let fill = Grid::from_fn(mask.width(), mask.height(), |x, y| {
        *mask.get(x, y) && *closed.get(x, y)
    });
    let remaining = Grid::from_fn(mask.width(), mask.height(), |x, y| {
        *mask.get(x, y) && !*closed.get(x, y)
    });
    let mut image = view.rgb.clone();
    if fill.count_set() > 0 {
        telea_inpaint(&mut image, &fill, &remaining, TELEA_RADIUS);
    }
    Ok((image, remaining))
}
