use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::grid::{ColorImage, DepthMap, Grid};

/// Depth jump (meters) above which two neighboring pixels are treated as
/// lying on different surfaces.
pub const DEFAULT_EDGE_JUMP: f64 = 0.03;

/// Normal assigned where the surface orientation cannot be estimated.
pub const FALLBACK_NORMAL: Vector3<f64> = Vector3::new(0.0, 0.0, -1.0);

/// Per-pixel unit normals (camera frame) and occlusion-boundary probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalBoundaryMaps {
    pub normals: Grid<Vector3<f64>>,
    pub boundary: Grid<f64>,
}

impl NormalBoundaryMaps {
    pub fn new(normals: Grid<Vector3<f64>>, boundary: Grid<f64>) -> Result<Self> {
        if !normals.same_dims(&boundary) {
            return Err(Error::ShapeMismatch(format!(
                "normals {:?} vs boundary {:?}",
                normals.dims(),
                boundary.dims()
            )));
        }
        if let Some(n) = normals.iter().find(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(Error::InvalidInput(format!("non-unit normal {n:?}")));
        }
        if let Some(b) = boundary.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::InvalidInput(format!(
                "boundary probability {b} outside [0, 1]"
            )));
        }
        Ok(Self { normals, boundary })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.normals.dims()
    }
}

/// Source of normal and boundary maps for a (possibly inpainted) view.
pub trait NormalPredictor: Send + Sync {
    fn predict(
        &self,
        rgb: &ColorImage,
        depth: &DepthMap,
        intrinsics: &CameraIntrinsics,
    ) -> Result<NormalBoundaryMaps>;
}

/// Offline estimator working on depth alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricNormals {
    pub edge_jump: f64,
}

impl Default for GeometricNormals {
    fn default() -> Self {
        Self {
            edge_jump: DEFAULT_EDGE_JUMP,
        }
    }
}

impl NormalPredictor for GeometricNormals {
    fn predict(
        &self,
        _rgb: &ColorImage,
        depth: &DepthMap,
        intrinsics: &CameraIntrinsics,
    ) -> Result<NormalBoundaryMaps> {
        if depth.dims() != (intrinsics.width, intrinsics.height) {
            return Err(Error::PredictorShapeMismatch(format!(
                "depth {:?} vs intrinsics {}x{}",
                depth.dims(),
                intrinsics.width,
                intrinsics.height
            )));
        }
        Ok(estimate_normals_geometric(
            depth,
            intrinsics,
            self.edge_jump,
        ))
    }
}

fn valid(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// Normals from central differences of the deprojected surface, falling
/// back to one-sided differences next to holes and depth jumps.
///
/// A pixel's boundary probability is 1 when any valid 4-neighbor differs in
/// depth by more than `edge_jump`. Pixels without a usable neighbor along
/// either image axis get [`FALLBACK_NORMAL`] and boundary 1.
pub fn estimate_normals_geometric(
    depth: &DepthMap,
    k: &CameraIntrinsics,
    edge_jump: f64,
) -> NormalBoundaryMaps {
    let (w, h) = depth.dims();
    let point = |x: usize, y: usize| k.deproject_pixel(x as f64, y as f64, *depth.get(x, y));
    let mut normals = Grid::filled(w, h, FALLBACK_NORMAL);
    let mut boundary = Grid::filled(w, h, 1.0);
    for y in 0..h {
        for x in 0..w {
            let z = *depth.get(x, y);
            if !valid(z) {
                continue;
            }
            let usable = |nx: i64, ny: i64| -> Option<(usize, usize)> {
                let nz = *depth.checked(nx, ny)?;
                (valid(nz) && (nz - z).abs() <= edge_jump).then_some((nx as usize, ny as usize))
            };
            let jump = depth
                .neighbors4(x, y)
                .map(|(nx, ny)| *depth.get(nx, ny))
                .filter(|nz| valid(*nz))
                .any(|nz| (nz - z).abs() > edge_jump);

            let (xi, yi) = (x as i64, y as i64);
            let tangent =
                |prev: Option<(usize, usize)>, next: Option<(usize, usize)>| match (prev, next) {
                    (Some(a), Some(b)) => Some(point(b.0, b.1) - point(a.0, a.1)),
                    (None, Some(b)) => Some(point(b.0, b.1) - point(x, y)),
                    (Some(a), None) => Some(point(x, y) - point(a.0, a.1)),
                    (None, None) => None,
                };
            let tx = tangent(usable(xi - 1, yi), usable(xi + 1, yi));
            let ty = tangent(usable(xi, yi - 1), usable(xi, yi + 1));
            let (Some(tx), Some(ty)) = (tx, ty) else {
                continue;
            };
            let n = tx.cross(&ty);
            let len = n.norm();
            if !(len > 0.0) || !len.is_finite() {
                continue;
            }
            let mut n = n / len;
            if n.dot(&point(x, y)) > 0.0 {
                n = -n;
            }
            normals.set(x, y, n);
            boundary.set(x, y, if jump { 1.0 } else { 0.0 });
        }
    }
    NormalBoundaryMaps { normals, boundary }
}
