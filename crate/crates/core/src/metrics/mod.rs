//! Scene-completion metrics: voxel IoU, directed Chamfer distance and
//! F-Score, plus ground-truth assembly.

mod kdtree;

use std::collections::HashSet;
use std::fmt;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kdtree::KdTree;

use crate::error::{Error, Result};
use crate::geometry::{bounds_of, deproject, ColoredPointCloud, Pose, RgbdFrame};

pub const DEFAULT_RESOLUTION: usize = 100;
pub const DEFAULT_TAU_FRACTION: f64 = 0.01;
pub const DEFAULT_CROP_BUFFER: f64 = 0.10;

/// Distance from each query to its nearest point in `target`.
pub fn nearest_distances(queries: &[Vector3<f64>], target: &[Vector3<f64>]) -> Result<Vec<f64>> {
    if queries.is_empty() || target.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let tree = KdTree::new(target);
    Ok(queries
        .par_iter()
        .map(|q| tree.nearest(q).expect("non-empty tree").1.sqrt())
        .collect())
}

/// Directed Chamfer distance: mean over `x ∈ X` of the distance to the
/// nearest `y ∈ Y`.
pub fn chamfer(x: &[Vector3<f64>], y: &[Vector3<f64>]) -> Result<f64> {
    let d = nearest_distances(x, y)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

type PointPair = (Vec<Vector3<f64>>, Vec<Vector3<f64>>);

/// Maps both sets into the unit cube with one isotropic scale taken from
/// their joint bounding box, centered.
pub fn normalize_jointly(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Result<PointPair> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let (lo_a, hi_a) = bounds_of(a).expect("non-empty");
    let (lo_b, hi_b) = bounds_of(b).expect("non-empty");
    let lo = lo_a.inf(&lo_b);
    let hi = hi_a.sup(&hi_b);
    let extent = (hi - lo).max();
    let scale = if extent > 0.0 { 1.0 / extent } else { 0.0 };
    let offset = (Vector3::repeat(1.0) - (hi - lo) * scale) * 0.5;
    let map = |p: &Vector3<f64>| (p - lo) * scale + offset;
    Ok((a.iter().map(map).collect(), b.iter().map(map).collect()))
}

fn voxels(points: &[Vector3<f64>], resolution: usize) -> HashSet<[usize; 3]> {
    let max = resolution as f64 - 1.0;
    points
        .iter()
        .map(|p| {
            let v = |c: f64| (c * resolution as f64).floor().clamp(0.0, max) as usize;
            [v(p.x), v(p.y), v(p.z)]
        })
        .collect()
}

/// IoU of the occupied voxels of both sets at `resolution³`, after joint
/// unit-cube normalization.
pub fn voxel_iou(pred: &[Vector3<f64>], gt: &[Vector3<f64>], resolution: usize) -> Result<f64> {
    if resolution == 0 {
        return Err(Error::InvalidInput(
            "voxel resolution must be positive".into(),
        ));
    }
    let (p, g) = normalize_jointly(pred, gt)?;
    let vp = voxels(&p, resolution);
    let vg = voxels(&g, resolution);
    let inter = vp.intersection(&vg).count();
    let union = vp.len() + vg.len() - inter;
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub tau: f64,
}

/// F-Score with threshold `tau_fraction × diagonal(gt bounding box)`.
pub fn fscore(pred: &[Vector3<f64>], gt: &[Vector3<f64>], tau_fraction: f64) -> Result<FScore> {
    let (lo, hi) = bounds_of(gt).ok_or(Error::EmptyPointSet)?;
    fscore_with_tau(pred, gt, tau_fraction * (hi - lo).norm())
}

pub fn fscore_with_tau(pred: &[Vector3<f64>], gt: &[Vector3<f64>], tau: f64) -> Result<FScore> {
    let dp = nearest_distances(pred, gt)?;
    let dg = nearest_distances(gt, pred)?;
    let precision = dp.iter().filter(|d| **d <= tau).count() as f64 / dp.len() as f64;
    let recall = dg.iter().filter(|d| **d <= tau).count() as f64 / dg.len() as f64;
    let fscore = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(FScore {
        precision,
        recall,
        fscore,
        tau,
    })
}

/// Deprojects each frame into the common frame (`pose` maps that frame's
/// camera coordinates into it), appends the object clouds, and crops to the
/// object clouds' bounding box grown by `crop_buffer`. Without object
/// clouds there is no crop box and everything is kept.
pub fn assemble_ground_truth(
    frames: &[(RgbdFrame, Pose)],
    objects: &[ColoredPointCloud],
    crop_buffer: f64,
) -> ColoredPointCloud {
    let mut all = ColoredPointCloud::default();
    for (frame, pose) in frames {
        let cloud = deproject(frame);
        for (p, c) in cloud.points.iter().zip(&cloud.colors) {
            all.push(pose.apply(p), *c);
        }
    }
    for o in objects {
        all.extend_from(o);
    }
    let object_points: Vec<Vector3<f64>> = objects
        .iter()
        .flat_map(|o| o.points.iter().copied())
        .collect();
    let Some((lo, hi)) = bounds_of(&object_points) else {
        return all;
    };
    let lo = lo - Vector3::repeat(crop_buffer);
    let hi = hi + Vector3::repeat(crop_buffer);
    let mut out = ColoredPointCloud::default();
    for (p, c) in all.points.iter().zip(&all.colors) {
        if (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i]) {
            out.push(*p, *c);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdUnits {
    /// Chamfer distances in the clouds' own units.
    Meters,
    /// Chamfer distances after the same joint unit-cube normalization as IoU.
    UnitCube,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub resolution: usize,
    pub tau_fraction: f64,
    pub cd_units: CdUnits,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            tau_fraction: DEFAULT_TAU_FRACTION,
            cd_units: CdUnits::UnitCube,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub fscore: f64,
    pub precision: f64,
    pub recall: f64,
    /// CD(S*, S): ground-truth coverage.
    pub cd_gt_to_pred: f64,
    /// CD(S, S*): prediction accuracy.
    pub cd_pred_to_gt: f64,
    pub cd_sum: f64,
    pub cd_units: CdUnits,
    pub resolution: usize,
    pub tau_fraction: f64,
    pub pred_points: usize,
    pub gt_points: usize,
}

pub fn evaluate(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
    options: &EvalOptions,
) -> Result<MetricsReport> {
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let iou = voxel_iou(pred, gt, options.resolution)?;
    let f = fscore(pred, gt, options.tau_fraction)?;
    let (cd_gt_to_pred, cd_pred_to_gt) = match options.cd_units {
        CdUnits::Meters => (chamfer(gt, pred)?, chamfer(pred, gt)?),
        CdUnits::UnitCube => {
            let (p, g) = normalize_jointly(pred, gt)?;
            (chamfer(&g, &p)?, chamfer(&p, &g)?)
        }
    };
    Ok(MetricsReport {
        iou,
        fscore: f.fscore,
        precision: f.precision,
        recall: f.recall,
        cd_gt_to_pred,
        cd_pred_to_gt,
        cd_sum: cd_gt_to_pred + cd_pred_to_gt,
        cd_units: options.cd_units,
        resolution: options.resolution,
        tau_fraction: options.tau_fraction,
        pred_points: pred.len(),
        gt_points: gt.len(),
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let units = match self.cd_units {
            CdUnits::Meters => "m",
            CdUnits::UnitCube => "unit cube",
        };
        writeln!(
            f,
            "{:>8}  {:>8}  {:>11}  {:>11}  {:>9}",
            "IoU", "F-Score", "CD(S*,S)", "CD(S,S*)", "CD"
        )?;
        writeln!(
            f,
            "{:>8.4}  {:>8.4}  {:>11.5}  {:>11.5}  {:>9.5}",
            self.iou, self.fscore, self.cd_gt_to_pred, self.cd_pred_to_gt, self.cd_sum
        )?;
        write!(
            f,
            "(IoU at {}^3, F-Score@{}%, CD in {units}; {} predicted vs {} ground-truth points)",
            self.resolution,
            self.tau_fraction * 100.0,
            self.pred_points,
            self.gt_points
        )
    }
}
