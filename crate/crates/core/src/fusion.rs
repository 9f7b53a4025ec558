//! Cross-view consistency filtering of completed views.

use std::collections::HashMap;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ColoredPointCloud;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FusionParams {
    /// Support radius in meters (closed ball).
    pub radius: f64,
    /// Distinct other views that must support a point.
    pub min_other_views: usize,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            radius: 0.01,
            min_other_views: 2,
        }
    }
}

impl FusionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "fusion radius must be positive, got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

/// Points predicted from one viewpoint, in the input camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewCloud {
    pub view_id: usize,
    pub cloud: ColoredPointCloud,
}

type Cell = (i64, i64, i64);

/// Uniform hash grid answering "is any point within `radius` of q?".
pub struct PointGrid<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    radius_sq: f64,
    cells: HashMap<Cell, Vec<u32>>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Vector3<f64>], radius: f64) -> Self {
        // Slightly oversized cells keep every in-radius neighbor within the
        // 27-cell block despite rounding in the division.
        let cell = radius * (1.0 + 1e-9);
        let mut cells: HashMap<Cell, Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        Self {
            points,
            cell,
            radius_sq: radius * radius,
            cells,
        }
    }

    fn key(p: &Vector3<f64>, cell: f64) -> Cell {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    pub fn any_within(&self, q: &Vector3<f64>) -> bool {
        let (cx, cy, cz) = Self::key(q, self.cell);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        if ids.iter().any(|&i| {
                            (self.points[i as usize] - q).norm_squared() <= self.radius_sq
                        }) {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

/// Number of distinct other views supporting each point of each view, in
/// input order.
pub fn support_counts(views: &[ViewCloud], radius: f64) -> Vec<Vec<usize>> {
    let grids: Vec<PointGrid> = views
        .iter()
        .map(|v| PointGrid::new(&v.cloud.points, radius))
        .collect();
    views
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.cloud
                .points
                .par_iter()
                .map(|p| {
                    grids
                        .iter()
                        .enumerate()
                        .filter(|(j, g)| *j != i && g.any_within(p))
                        .count()
                })
                .collect()
        })
        .collect()
}

/// Keeps each point supported by at least `min_other_views` other views.
/// Survivors are ordered by `view_id`, then by their original position.
pub fn consistency_filter(views: &[ViewCloud], params: &FusionParams) -> ColoredPointCloud {
    let counts = support_counts(views, params.radius);
    let mut order: Vec<usize> = (0..views.len()).collect();
    order.sort_by_key(|&i| views[i].view_id);
    let mut out = ColoredPointCloud::default();
    for i in order {
        let v = &views[i];
        for ((p, c), n) in v.cloud.points.iter().zip(&v.cloud.colors).zip(&counts[i]) {
            if *n >= params.min_other_views {
                out.push(*p, *c);
            }
        }
    }
    out
}

/// The input cloud, unfiltered, followed by the consistent predicted points.
pub fn fuse_with_input(
    input: &ColoredPointCloud,
    views: &[ViewCloud],
    params: &FusionParams,
) -> ColoredPointCloud {
    let mut out = input.clone();
    out.extend_from(&consistency_filter(views, params));
    out
}
