//! Surface-aware masking.
//!
//! Every observed pixel spawns a ray of samples extending behind its surface
//! point; the triangulated samples form an occupancy volume for space the
//! input view cannot see into. Rendering that volume at a novel pose tells us
//! which reprojected points are actually hidden behind unobserved space, so
//! they are dropped and the pixels are handed to the inpainter instead of
//! showing through as background.

mod frustum;
mod raster;

pub use frustum::{
    build_frustum_points, triangulate_frustum, FrustumMesh, FrustumParams, FrustumPoints,
    FrustumRay,
};
pub use raster::{rasterize_triangle, render_frustum_depth};

use crate::error::{Error, Result};
use crate::geometry::{
    deproject, project, CameraIntrinsics, ColoredPointCloud, PartialView, Pose, RgbdFrame,
};
use crate::grid::{DepthMap, Mask};

/// Slack when comparing reprojected depth against rendered occluder depth.
pub const RENDER_EPS: f64 = 1e-4;

/// `true` where the pixel should be inpainted: nothing was reprojected there,
/// or the reprojected point lies behind the rendered occupancy volume.
pub fn compute_mask(partial_depth: &DepthMap, occluder_depth: &DepthMap, eps: f64) -> Result<Mask> {
    if !partial_depth.same_dims(occluder_depth) {
        return Err(Error::ShapeMismatch(
            "partial depth vs occluder depth".into(),
        ));
    }
    let data = partial_depth
        .iter()
        .zip(occluder_depth.iter())
        .map(|(&d, &occ)| d == 0.0 || d > occ + eps)
        .collect();
    Mask::from_vec(partial_depth.width(), partial_depth.height(), data)
}

#[derive(Debug, Clone)]
pub struct MaskedView {
    /// `true` = inpaint, `false` = context.
    pub mask: Mask,
    /// Reprojection with occluded points removed.
    pub view: PartialView,
    /// Rendered depth of the occupancy volume (`+∞` where uncovered).
    pub occluder_depth: DepthMap,
}

/// Per-frame state reused across every novel pose: the deprojected input and
/// its occupancy mesh.
#[derive(Debug, Clone)]
pub struct SurfaceMasker {
    pub intrinsics: CameraIntrinsics,
    pub cloud: ColoredPointCloud,
    pub mesh: FrustumMesh,
}

impl SurfaceMasker {
    pub fn new(frame: &RgbdFrame, params: &FrustumParams) -> Result<Self> {
        let points = build_frustum_points(frame, params)?;
        Ok(Self {
            intrinsics: frame.intrinsics,
            cloud: deproject(frame),
            mesh: triangulate_frustum(&points),
        })
    }

    pub fn render(&self, pose: &Pose) -> MaskedView {
        let mut view = project(&self.cloud, &self.intrinsics, pose);
        let occluder_depth = render_frustum_depth(&self.mesh, &self.intrinsics, pose);
        let mask = compute_mask(&view.depth, &occluder_depth, RENDER_EPS).expect("same intrinsics");
        for (i, &m) in mask.iter().enumerate() {
            if m && view.depth.as_slice()[i] > 0.0 {
                let (x, y) = mask.coords(i);
                view.invalidate(x, y);
            }
        }
        MaskedView {
            mask,
            view,
            occluder_depth,
        }
    }
}

pub fn surface_aware_mask(
    frame: &RgbdFrame,
    pose: &Pose,
    params: &FrustumParams,
) -> Result<(Mask, PartialView)> {
    let out = SurfaceMasker::new(frame, params)?.render(pose);
    Ok((out.mask, out.view))
}
