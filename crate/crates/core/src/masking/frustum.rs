//! Occupancy frustum behind observed surfaces, sampled along camera rays and
//! triangulated into a lattice mesh.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RgbdFrame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrustumParams {
    /// Metric distance between consecutive samples along a ray.
    pub spacing: f64,
    /// Samples per ray behind the surface point.
    pub samples: usize,
    /// Pixel stride of the ray grid.
    pub grid_stride: usize,
    /// Adjacent rays whose depths differ by more than this fraction of the
    /// nearer depth are not connected, so the lattice never bridges a depth
    /// discontinuity.
    pub max_depth_jump: f64,
}

impl Default for FrustumParams {
    fn default() -> Self {
        Self {
            spacing: 0.01,
            samples: 100,
            grid_stride: 4,
            max_depth_jump: 0.05,
        }
    }
}

impl FrustumParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing > 0.0)
            || self.samples < 1
            || self.grid_stride < 1
            || !(self.max_depth_jump > 0.0)
        {
            return Err(Error::InvalidInput(format!(
                "invalid frustum parameters {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrustumRay {
    pub pixel: (usize, usize),
    pub depth: f64,
    pub surface: Vector3<f64>,
    /// Unit-length viewing direction.
    pub direction: Vector3<f64>,
}

/// Ray samples on a subsampled pixel grid. Cell `(row, col)` holds the ray
/// through the `row`-th sampled image row and `col`-th sampled column, or
/// `None` where the source pixel had no depth.
#[derive(Debug, Clone)]
pub struct FrustumPoints {
    pub rows: usize,
    pub cols: usize,
    pub samples: usize,
    pub spacing: f64,
    pub max_depth_jump: f64,
    rays: Vec<Option<FrustumRay>>,
}

impl FrustumPoints {
    pub fn ray(&self, row: usize, col: usize) -> Option<&FrustumRay> {
        self.rays[row * self.cols + col].as_ref()
    }

    /// Sample `i` (1-based, `1..=samples`) along the ray at `(row, col)`.
    pub fn point(&self, row: usize, col: usize, i: usize) -> Option<Vector3<f64>> {
        debug_assert!(i >= 1 && i <= self.samples);
        self.ray(row, col)
            .map(|r| r.surface + r.direction * (i as f64 * self.spacing))
    }

    pub fn valid_rays(&self) -> usize {
        self.rays.iter().filter(|r| r.is_some()).count()
    }
}

fn sample_positions(len: usize, stride: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..len).step_by(stride).collect();
    if out.last() != Some(&(len - 1)) {
        out.push(len - 1);
    }
    out
}

pub fn build_frustum_points(frame: &RgbdFrame, params: &FrustumParams) -> Result<FrustumPoints> {
    params.validate()?;
    let k = &frame.intrinsics;
    let us = sample_positions(k.width, params.grid_stride);
    let vs = sample_positions(k.height, params.grid_stride);
    let mut rays = Vec::with_capacity(us.len() * vs.len());
    for &v in &vs {
        for &u in &us {
            let d = *frame.depth.get(u, v);
            rays.push((d > 0.0).then(|| {
                let r = k.ray(u as f64, v as f64);
                FrustumRay {
                    pixel: (u, v),
                    depth: d,
                    surface: r * d,
                    direction: r.normalize(),
                }
            }));
        }
    }
    if rays.iter().all(|r| r.is_none()) {
        return Err(Error::EmptyFrustum);
    }
    Ok(FrustumPoints {
        rows: vs.len(),
        cols: us.len(),
        samples: params.samples,
        spacing: params.spacing,
        max_depth_jump: params.max_depth_jump,
        rays,
    })
}

/// Triangle mesh in the source camera frame.
#[derive(Debug, Clone, Default)]
pub struct FrustumMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl FrustumMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

struct MeshBuilder<'a> {
    grid: &'a FrustumPoints,
    vertex_base: Vec<Option<u32>>,
    mesh: FrustumMesh,
}

impl MeshBuilder<'_> {
    fn vertex(&mut self, cell: usize, i: usize) -> u32 {
        let base = match self.vertex_base[cell] {
            Some(b) => b,
            None => {
                let (row, col) = (cell / self.grid.cols, cell % self.grid.cols);
                let b = self.mesh.vertices.len() as u32;
                for s in 1..=self.grid.samples {
                    let p = self.grid.point(row, col, s).expect("vertex on invalid ray");
                    self.mesh.vertices.push(p);
                }
                self.vertex_base[cell] = Some(b);
                b
            }
        };
        base + (i - 1) as u32
    }

    fn triangle(&mut self, a: (usize, usize), b: (usize, usize), c: (usize, usize)) {
        let ia = self.vertex(a.0, a.1);
        let ib = self.vertex(b.0, b.1);
        let ic = self.vertex(c.0, c.1);
        let v = &self.mesh.vertices;
        let area2 = (v[ib as usize] - v[ia as usize])
            .cross(&(v[ic as usize] - v[ia as usize]))
            .norm();
        if area2 > 1e-18 {
            self.mesh.triangles.push([ia, ib, ic]);
        }
    }
}

/// Connects grid-adjacent rays into layered quads, one layer per sample
/// index, and closes the outer boundary of the connected region with side
/// walls between consecutive samples.
pub fn triangulate_frustum(grid: &FrustumPoints) -> FrustumMesh {
    let (rows, cols) = (grid.rows, grid.cols);
    if rows < 2 || cols < 2 {
        return FrustumMesh::default();
    }
    let cell = |r: usize, c: usize| r * cols + c;
    let connected = |cells: &[usize]| -> bool {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &i in cells {
            match &grid.rays[i] {
                Some(r) => {
                    lo = lo.min(r.depth);
                    hi = hi.max(r.depth);
                }
                None => return false,
            }
        }
        hi - lo <= grid.max_depth_jump * lo
    };

    let quad_rows = rows - 1;
    let quad_cols = cols - 1;
    let mut quad_ok = vec![false; quad_rows * quad_cols];
    for r in 0..quad_rows {
        for c in 0..quad_cols {
            quad_ok[r * quad_cols + c] = connected(&[
                cell(r, c),
                cell(r, c + 1),
                cell(r + 1, c + 1),
                cell(r + 1, c),
            ]);
        }
    }
    let quad = |r: isize, c: isize| -> bool {
        r >= 0
            && c >= 0
            && (r as usize) < quad_rows
            && (c as usize) < quad_cols
            && quad_ok[r as usize * quad_cols + c as usize]
    };

    let mut b = MeshBuilder {
        grid,
        vertex_base: vec![None; rows * cols],
        mesh: FrustumMesh::default(),
    };
    let m = grid.samples;

    for r in 0..quad_rows {
        for c in 0..quad_cols {
            if !quad_ok[r * quad_cols + c] {
                continue;
            }
            let (a, bb, cc, d) = (
                cell(r, c),
                cell(r, c + 1),
                cell(r + 1, c + 1),
                cell(r + 1, c),
            );
            for i in 1..=m {
                b.triangle((a, i), (bb, i), (cc, i));
                b.triangle((a, i), (cc, i), (d, i));
            }
        }
    }

    let wall = |b: &mut MeshBuilder, p: usize, q: usize| {
        for i in 1..m {
            b.triangle((p, i), (q, i), (q, i + 1));
            b.triangle((p, i), (q, i + 1), (p, i + 1));
        }
    };
    // Horizontal grid edges (r, c)-(r, c+1) border quads (r-1, c) and (r, c).
    for r in 0..rows {
        for c in 0..quad_cols {
            let (ri, ci) = (r as isize, c as isize);
            if quad(ri - 1, ci) != quad(ri, ci) {
                wall(&mut b, cell(r, c), cell(r, c + 1));
            }
        }
    }
    // Vertical grid edges (r, c)-(r+1, c) border quads (r, c-1) and (r, c).
    for r in 0..quad_rows {
        for c in 0..cols {
            let (ri, ci) = (r as isize, c as isize);
            if quad(ri, ci - 1) != quad(ri, ci) {
                wall(&mut b, cell(r, c), cell(r + 1, c));
            }
        }
    }
    b.mesh
}
