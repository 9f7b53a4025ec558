use crate::error::{Error, Result};
use crate::grid::{ColorImage, Mask};

use super::{InpaintBackend, InpaintRequest};

/// Offline backend: every masked pixel copies its nearest unmasked pixel
/// (Euclidean pixel distance, ties broken row-major). The seed is ignored,
/// so output depends only on image and mask.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

impl InpaintBackend for MockBackend {
    fn id(&self) -> String {
        "mock-nearest-v1".into()
    }

    fn inpaint(&self, request: &InpaintRequest) -> Result<ColorImage> {
        nearest_fill(&request.image, &request.mask)
    }
}

pub fn nearest_fill(image: &ColorImage, mask: &Mask) -> Result<ColorImage> {
    if !image.same_dims(mask) {
        return Err(Error::ShapeMismatch("image vs mask".into()));
    }
    let (w, h) = (image.width() as i64, image.height() as i64);
    if mask.count_set() == mask.len() {
        // Nothing to copy from.
        return Ok(image.clone());
    }
    let mut out = image.clone();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x as usize, y as usize) {
                continue;
            }
            // (squared distance, row, col) of the best candidate so far.
            let mut best: Option<(i64, i64, i64)> = None;
            let mut ring = 1i64;
            loop {
                for (qx, qy) in ring_pixels(x, y, ring) {
                    if qx < 0 || qy < 0 || qx >= w || qy >= h || *mask.get(qx as usize, qy as usize)
                    {
                        continue;
                    }
                    let d2 = (qx - x).pow(2) + (qy - y).pow(2);
                    let cand = (d2, qy, qx);
                    if best.is_none_or(|b| cand < b) {
                        best = Some(cand);
                    }
                }
                // Every pixel on ring r+1 is at squared distance ≥ (r+1)².
                if let Some((d2, _, _)) = best {
                    if d2 < (ring + 1).pow(2) {
                        break;
                    }
                }
                ring += 1;
            }
            let (_, qy, qx) = best.expect("at least one unmasked pixel");
            out.set(x as usize, y as usize, *image.get(qx as usize, qy as usize));
        }
    }
    Ok(out)
}

/// Pixels at Chebyshev distance exactly `r` from `(x, y)`.
fn ring_pixels(x: i64, y: i64, r: i64) -> impl Iterator<Item = (i64, i64)> {
    let top_bottom = (-r..=r).flat_map(move |dx| [(x + dx, y - r), (x + dx, y + r)]);
    let sides = (-r + 1..r).flat_map(move |dy| [(x - r, y + dy), (x + r, y + dy)]);
    top_bottom.chain(sides)
}
