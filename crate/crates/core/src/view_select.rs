//! Novel viewpoints on the viewing sphere, chosen by context ratio.
//!
//! Each of the V directions is an azimuth about the axis from the input
//! camera to the scene centroid. Along a direction the camera walks a great
//! circle of the viewing sphere, always aimed at the centroid, and stops at
//! the step whose context ratio is closest to the target.

use nalgebra::{Rotation3, Unit, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    deproject, project, viewing_sphere, CameraIntrinsics, ColoredPointCloud, PartialView, Pose,
    RgbdFrame, ViewingSphere,
};
use crate::grid::Mask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ViewSelectionParams {
    pub num_viewpoints: usize,
    pub context_target: f64,
    /// Degrees per search increment.
    pub angle_step: f64,
    /// Largest rotation considered, degrees.
    pub max_angle: f64,
    /// Tilt of every walk's starting point toward the image top (positive)
    /// or bottom (negative), degrees.
    pub elevation_offset: f64,
}

impl Default for ViewSelectionParams {
    fn default() -> Self {
        Self {
            num_viewpoints: 10,
            context_target: 0.4,
            angle_step: 2.0,
            max_angle: 90.0,
            elevation_offset: 0.0,
        }
    }
}

impl ViewSelectionParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_viewpoints == 0 {
            return Err(Error::InvalidInput(
                "num_viewpoints must be at least 1".into(),
            ));
        }
        if !(self.context_target > 0.0 && self.context_target < 1.0) {
            return Err(Error::InvalidInput(format!(
                "context_target must lie in (0, 1), got {}",
                self.context_target
            )));
        }
        if !(self.angle_step > 0.0 && self.angle_step <= self.max_angle && self.max_angle < 180.0) {
            return Err(Error::InvalidInput(format!(
                "need 0 < angle_step <= max_angle < 180, got {} and {}",
                self.angle_step, self.max_angle
            )));
        }
        if !(self.elevation_offset.abs() < 90.0) {
            return Err(Error::InvalidInput(
                "elevation_offset must lie in (-90, 90)".into(),
            ));
        }
        Ok(())
    }

    /// Angles visited along each direction: `0, step, 2·step, …, ≤ max_angle`.
    pub fn search_angles(&self) -> Vec<f64> {
        let n = (self.max_angle / self.angle_step + 1e-9).floor() as usize;
        (0..=n).map(|i| i as f64 * self.angle_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedView {
    pub pose: Pose,
    pub context: f64,
    pub direction_index: usize,
    /// Degrees from the starting viewpoint.
    pub angle: f64,
}

/// Fraction of pixels not marked for inpainting.
pub fn context_ratio(mask: &Mask) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    (mask.len() - mask.count_set()) as f64 / mask.len() as f64
}

/// Fraction of pixels carrying projected content.
pub fn view_context_ratio(view: &PartialView) -> f64 {
    if view.depth.is_empty() {
        return 0.0;
    }
    view.depth.iter().filter(|d| **d > 0.0).count() as f64 / view.depth.len() as f64
}

/// Camera paths around the scene for one input frame.
#[derive(Debug, Clone)]
pub struct Orbit {
    pub sphere: ViewingSphere,
    /// Unit vector from the input camera toward the sphere center.
    pub axis: Vector3<f64>,
    e1: Vector3<f64>,
    e2: Vector3<f64>,
    num_directions: usize,
    elevation: f64,
}

impl Orbit {
    pub fn new(
        cloud: &ColoredPointCloud,
        num_directions: usize,
        elevation_offset_deg: f64,
    ) -> Result<Self> {
        let sphere = viewing_sphere(cloud, &Vector3::zeros())?;
        let axis = sphere.center / sphere.center.norm();
        let mut e1 = Vector3::x() - axis * axis.x;
        if e1.norm() < 1e-6 {
            e1 = Vector3::y() - axis * axis.y;
        }
        let e1 = e1.normalize();
        let e2 = axis.cross(&e1);
        Ok(Self {
            sphere,
            axis,
            e1,
            e2,
            num_directions: num_directions.max(1),
            elevation: elevation_offset_deg.to_radians(),
        })
    }

    /// Unit tangent of direction `k`.
    pub fn direction(&self, k: usize) -> Vector3<f64> {
        let phi = std::f64::consts::TAU * k as f64 / self.num_directions as f64;
        self.e1 * phi.cos() + self.e2 * phi.sin()
    }

    /// Camera position after walking `angle_deg` along direction `k`.
    pub fn eye(&self, k: usize, angle_deg: f64) -> Vector3<f64> {
        let start = self.start_rotation() * (-self.axis);
        let t = self.start_rotation() * self.direction(k);
        let th = angle_deg.to_radians();
        self.sphere.center + (start * th.cos() + t * th.sin()) * self.sphere.radius
    }

    fn start_rotation(&self) -> Rotation3<f64> {
        // Rotation about e1 moves the start toward the image top for positive offsets.
        Rotation3::from_axis_angle(&Unit::new_normalize(self.e1), self.elevation)
    }

    /// Pose of the camera at `angle_deg` along direction `k`. The unrotated
    /// start is the input camera itself; every other pose looks at the
    /// sphere center with image "down" carried along the walk.
    pub fn pose(&self, k: usize, angle_deg: f64) -> Result<Pose> {
        if angle_deg == 0.0 && self.elevation == 0.0 {
            return Ok(Pose::identity());
        }
        let from = -self.axis;
        let to = (self.eye(k, angle_deg) - self.sphere.center) / self.sphere.radius;
        let carry = Rotation3::rotation_between(&from, &to).unwrap_or_else(Rotation3::identity);
        let down = carry * Vector3::y();
        Pose::look_at(&self.eye(k, angle_deg), &self.sphere.center, &down)
    }
}

fn cloud_context(cloud: &ColoredPointCloud, k: &CameraIntrinsics, pose: &Pose) -> f64 {
    view_context_ratio(&project(cloud, k, pose))
}

/// Context ratio along direction `k` at each of `angles` (degrees).
pub fn context_sweep(
    cloud: &ColoredPointCloud,
    intrinsics: &CameraIntrinsics,
    orbit: &Orbit,
    k: usize,
    angles: &[f64],
) -> Result<Vec<f64>> {
    angles
        .par_iter()
        .map(|&a| Ok(cloud_context(cloud, intrinsics, &orbit.pose(k, a)?)))
        .collect()
}

/// Index of the entry closest to `target`; ties go to the earliest.
pub fn closest_to(values: &[f64], target: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        let gap = (v - target).abs();
        if best.is_none_or(|(_, g)| gap < g) {
            best = Some((i, gap));
        }
    }
    best.map(|(i, _)| i)
}

pub fn select_viewpoints(
    frame: &RgbdFrame,
    params: &ViewSelectionParams,
) -> Result<Vec<SelectedView>> {
    select_viewpoints_for_cloud(&deproject(frame), &frame.intrinsics, params)
}

pub fn select_viewpoints_for_cloud(
    cloud: &ColoredPointCloud,
    intrinsics: &CameraIntrinsics,
    params: &ViewSelectionParams,
) -> Result<Vec<SelectedView>> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyScene);
    }
    let orbit = Orbit::new(cloud, params.num_viewpoints, params.elevation_offset)?;
    let angles = params.search_angles();
    (0..params.num_viewpoints)
        .into_par_iter()
        .map(|k| {
            let sweep = context_sweep(cloud, intrinsics, &orbit, k, &angles)?;
            let best = closest_to(&sweep, params.context_target).expect("at least one angle");
            if !sweep.iter().any(|c| *c <= params.context_target) {
                log::warn!(
                    "direction {k}: no rotation up to {}° reaches context {} (closest {:.3} at {}°)",
                    params.max_angle,
                    params.context_target,
                    sweep[best],
                    angles[best]
                );
            }
            Ok(SelectedView {
                pose: orbit.pose(k, angles[best])?,
                context: sweep[best],
                direction_index: k,
                angle: angles[best],
            })
        })
        .collect()
}
