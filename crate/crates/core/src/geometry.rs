//! Pinhole camera model, rigid poses, RGB-D frames and colored point clouds.
//!
//! Camera convention: +z forward, +x right, +y down. Pixel `(u, v)` has its
//! center at image coordinate `(u, v)`, so the principal point `(cx, cy)` maps
//! onto the optical axis.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ColorImage, DepthMap, Grid, Mask, Rgb};

/// Z-buffer entries closer than this are treated as ties.
pub const DEPTH_TIE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive and finite (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput(
                "image dimensions must be non-zero".into(),
            ));
        }
        if !(0.0..self.width as f64).contains(&self.cx)
            || !(0.0..self.height as f64).contains(&self.cy)
        {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Unnormalized viewing ray `K⁻¹ (u, v, 1)ᵀ`; its z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    #[inline]
    pub fn deproject_pixel(&self, u: f64, v: f64, depth: f64) -> Vector3<f64> {
        Vector3::new(
            depth * (u - self.cx) / self.fx,
            depth * (v - self.cy) / self.fy,
            depth,
        )
    }

    /// Continuous image coordinates of a camera-frame point. Returns `None`
    /// for points on or behind the image plane.
    #[inline]
    pub fn project_point(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Nearest pixel for continuous image coordinates, if inside the image.
    #[inline]
    pub fn pixel_of(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let (ui, vi) = ((u + 0.5).floor(), (v + 0.5).floor());
        if ui < 0.0 || vi < 0.0 || ui >= self.width as f64 || vi >= self.height as f64 {
            None
        } else {
            Some((ui as usize, vi as usize))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

/// Rigid transform `p' = R·p + t`.
///
/// When used as a camera pose it maps points expressed in the reference
/// (input camera) frame into the frame of the posed camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

const ROTATION_TOL: f64 = 1e-9;

impl Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(ortho <= ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(Error::InvalidInput(format!(
                "rotation is not in SO(3) (orthogonality error {ortho:e}, det {det})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation by `angle` radians about `axis` (right-handed), no translation.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self {
            rotation: *r.matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Camera pose at `eye` whose optical axis passes through `target`.
    ///
    /// `down_hint` picks the image +y direction; it must not be parallel to
    /// the viewing direction.
    pub fn look_at(
        eye: &Vector3<f64>,
        target: &Vector3<f64>,
        down_hint: &Vector3<f64>,
    ) -> Result<Self> {
        let forward = target - eye;
        let dist = forward.norm();
        if !(dist > 0.0) {
            return Err(Error::InvalidInput(
                "look-at target coincides with eye".into(),
            ));
        }
        let z = forward / dist;
        let y_raw = down_hint - z * z.dot(down_hint);
        let y_norm = y_raw.norm();
        if y_norm < 1e-12 {
            return Err(Error::InvalidInput(
                "look-at hint parallel to view direction".into(),
            ));
        }
        let y = y_raw / y_norm;
        let x = y.cross(&z);
        let rotation = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Self {
            rotation,
            translation: -(rotation * eye),
        })
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Position of the posed camera's center in the reference frame.
    pub fn camera_center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

/// Registered color and metric depth with the camera that captured them.
#[derive(Debug, Clone)]
pub struct RgbdFrame {
    pub rgb: ColorImage,
    pub depth: DepthMap,
    pub intrinsics: CameraIntrinsics,
}

impl RgbdFrame {
    pub fn new(rgb: ColorImage, depth: DepthMap, intrinsics: CameraIntrinsics) -> Result<Self> {
        intrinsics.validate()?;
        let dims = (intrinsics.width, intrinsics.height);
        if rgb.dims() != dims || depth.dims() != dims {
            return Err(Error::ShapeMismatch(format!(
                "rgb {:?} / depth {:?} vs intrinsics {:?}",
                rgb.dims(),
                depth.dims(),
                dims
            )));
        }
        if let Some(bad) = depth.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidInput(format!("invalid depth value {bad}")));
        }
        Ok(Self {
            rgb,
            depth,
            intrinsics,
        })
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }

    pub fn valid_mask(&self) -> Mask {
        self.depth.map(|&d| d > 0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColoredPointCloud {
    pub points: Vec<Vector3<f64>>,
    pub colors: Vec<Rgb>,
}

impl ColoredPointCloud {
    pub fn new(points: Vec<Vector3<f64>>, colors: Vec<Rgb>) -> Result<Self> {
        if points.len() != colors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points but {} colors",
                points.len(),
                colors.len()
            )));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput("non-finite point coordinate".into()));
        }
        Ok(Self { points, colors })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: Vector3<f64>, c: Rgb) {
        self.points.push(p);
        self.colors.push(c);
    }

    pub fn extend_from(&mut self, other: &ColoredPointCloud) {
        self.points.extend_from_slice(&other.points);
        self.colors.extend_from_slice(&other.colors);
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vector3::zeros(), |acc, p| acc + p);
        Some(sum / self.points.len() as f64)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> Option<(Vector3<f64>, Vector3<f64>)> {
        bounds_of(&self.points)
    }
}

pub fn bounds_of(points: &[Vector3<f64>]) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let first = points.first()?;
    Some(
        points
            .iter()
            .fold((*first, *first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
    )
}

/// Sparse color/depth rendering at a novel pose; `depth == 0` marks a hole.
#[derive(Debug, Clone)]
pub struct PartialView {
    pub rgb: ColorImage,
    pub depth: DepthMap,
}

impl PartialView {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            rgb: Grid::filled(width, height, [0, 0, 0]),
            depth: Grid::filled(width, height, 0.0),
        }
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        *self.depth.get(x, y) > 0.0
    }

    pub fn valid(&self) -> Mask {
        self.depth.map(|&d| d > 0.0)
    }

    /// Clears a pixel back to "missing".
    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.depth.set(x, y, 0.0);
        self.rgb.set(x, y, [0, 0, 0]);
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }
}

/// One point per pixel with positive depth, in row-major pixel order.
pub fn deproject(frame: &RgbdFrame) -> ColoredPointCloud {
    let k = &frame.intrinsics;
    let mut cloud = ColoredPointCloud::default();
    for v in 0..frame.depth.height() {
        for u in 0..frame.depth.width() {
            let d = *frame.depth.get(u, v);
            if d > 0.0 {
                cloud.push(
                    k.deproject_pixel(u as f64, v as f64, d),
                    *frame.rgb.get(u, v),
                );
            }
        }
    }
    cloud
}

/// Like [`deproject`], but also returns each point's source pixel index.
pub fn deproject_indexed(frame: &RgbdFrame) -> (ColoredPointCloud, Vec<usize>) {
    let cloud = deproject(frame);
    let pixels = frame
        .depth
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0.0)
        .map(|(i, _)| i)
        .collect();
    (cloud, pixels)
}

/// Z-buffered nearest-pixel splat of `cloud` into the camera at `pose`.
pub fn project(
    cloud: &ColoredPointCloud,
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
) -> PartialView {
    let mut view = PartialView::empty(intrinsics.width, intrinsics.height);
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        let q = pose.apply(p);
        let Some((u, v)) = intrinsics.project_point(&q) else {
            continue;
        };
        let Some((x, y)) = intrinsics.pixel_of(u, v) else {
            continue;
        };
        let current = *view.depth.get(x, y);
        // Earlier (lower-index) points win ties.
        if current == 0.0 || q.z < current - DEPTH_TIE_EPS {
            view.depth.set(x, y, q.z);
            view.rgb.set(x, y, *c);
        }
    }
    view
}

pub fn transform(cloud: &ColoredPointCloud, pose: &Pose) -> ColoredPointCloud {
    ColoredPointCloud {
        points: cloud.points.iter().map(|p| pose.apply(p)).collect(),
        colors: cloud.colors.clone(),
    }
}

/// Sphere on which novel cameras orbit the scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewingSphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

pub fn viewing_sphere(
    cloud: &ColoredPointCloud,
    camera_position: &Vector3<f64>,
) -> Result<ViewingSphere> {
    let center = cloud.centroid().ok_or(Error::EmptyScene)?;
    let radius = (camera_position - center).norm();
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(
            "degenerate viewing sphere: scene centroid coincides with the camera".into(),
        ));
    }
    Ok(ViewingSphere { center, radius })
}
