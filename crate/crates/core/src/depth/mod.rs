//! Depth completion: lift an inpainted view to a dense depth map.
//!
//! The unknown depths `d` minimize
//!
//! ```text
//! E = λ_D Σ_obs (d(u) − D̄(u))²
//!   + λ_S Σ_{u~v} (d(u) − d(v))²
//!   + λ_N Σ_{u~v} w_uv [ (n(u)·Δ)² + (n(v)·Δ)² ],   Δ = d(v) r(v) − d(u) r(u)
//! ```
//!
//! where `u~v` ranges over unordered 4-neighbor pairs, `r = K⁻¹(x, y, 1)ᵀ` and
//! `w_uv = (1 − b(u))(1 − b(v))` from the boundary map.

mod normals;
mod remote;
mod solver;

use serde::{Deserialize, Serialize};

pub use normals::{
    estimate_normals_geometric, GeometricNormals, NormalBoundaryMaps, NormalPredictor,
    DEFAULT_EDGE_JUMP, FALLBACK_NORMAL,
};
pub use remote::{decode_maps, encode_maps, RemoteNormalPredictor};
pub use solver::{conjugate_gradient, CgOutcome, CsrMatrix, LeastSquaresBuilder, NormalEquations};

use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::grid::{DepthMap, Grid, Mask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthSolveParams {
    pub lambda_d: f64,
    pub lambda_s: f64,
    pub lambda_n: f64,
    /// Relative residual `‖b − A x‖ / ‖b‖` at which CG stops.
    pub solver_tol: f64,
    /// Iteration cap; `None` means `10 · H · √W`.
    pub max_iters: Option<usize>,
}

impl Default for DepthSolveParams {
    fn default() -> Self {
        Self {
            lambda_d: 1000.0,
            lambda_s: 0.001,
            lambda_n: 1.0,
            solver_tol: 1e-8,
            max_iters: None,
        }
    }
}

impl DepthSolveParams {
    pub fn validate(&self) -> Result<()> {
        let ls = [self.lambda_d, self.lambda_s, self.lambda_n];
        if ls.iter().any(|l| !(l.is_finite() && *l >= 0.0)) || ls.iter().all(|l| *l == 0.0) {
            return Err(Error::InvalidInput(format!("bad depth weights {ls:?}")));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "solver_tol must be positive, got {}",
                self.solver_tol
            )));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, width: usize, height: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| (10.0 * height as f64 * (width as f64).sqrt()).ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone)]
pub struct DepthSolution {
    /// Completed depth; 0 outside the solved region and in regions with no
    /// observed anchor.
    pub depth: DepthMap,
    pub energy: f64,
    pub relative_residual: f64,
    pub iterations: usize,
    pub unknowns: usize,
}

pub fn is_observed(z: f64) -> bool {
    z.is_finite() && z > 0.0
}

/// Chebyshev dilation by `radius` pixels.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    let (w, h) = mask.dims();
    let r = radius as i64;
    let rows = Grid::from_fn(w, h, |x, y| {
        (-r..=r).any(|d| {
            mask.checked(x as i64 + d, y as i64)
                .copied()
                .unwrap_or(false)
        })
    });
    Grid::from_fn(w, h, |x, y| {
        (-r..=r).any(|d| {
            rows.checked(x as i64, y as i64 + d)
                .copied()
                .unwrap_or(false)
        })
    })
}

/// Pixels worth solving for: observed or to-be-inpainted, grown by two pixels.
pub fn solve_region(partial: &DepthMap, inpaint_mask: &Mask) -> Result<Mask> {
    if !partial.same_dims(inpaint_mask) {
        return Err(Error::ShapeMismatch("depth vs inpaint mask".into()));
    }
    let seed = Grid::from_fn(partial.width(), partial.height(), |x, y| {
        is_observed(*partial.get(x, y)) || *inpaint_mask.get(x, y)
    });
    Ok(dilate(&seed, 2))
}

/// The assembled problem over a set of pixels, exposed so callers can
/// evaluate the energy of arbitrary depth maps.
pub struct DepthProblem {
    pub equations: NormalEquations,
    /// Pixel index of each unknown.
    pub pixels: Vec<usize>,
    width: usize,
    height: usize,
}

impl DepthProblem {
    pub fn gather(&self, depth: &DepthMap) -> Vec<f64> {
        self.pixels.iter().map(|&p| depth.as_slice()[p]).collect()
    }

    pub fn scatter(&self, x: &[f64]) -> DepthMap {
        let mut out = Grid::filled(self.width, self.height, 0.0);
        for (&p, &v) in self.pixels.iter().zip(x) {
            out.as_mut_slice()[p] = v;
        }
        out
    }

    pub fn energy(&self, depth: &DepthMap) -> f64 {
        self.equations.energy(&self.gather(depth))
    }
}

fn check_inputs(partial: &DepthMap, maps: &NormalBoundaryMaps, k: &CameraIntrinsics) -> Result<()> {
    if partial.dims() != maps.dims() || partial.dims() != (k.width, k.height) {
        return Err(Error::ShapeMismatch(format!(
            "depth {:?}, maps {:?}, intrinsics {}x{}",
            partial.dims(),
            maps.dims(),
            k.width,
            k.height
        )));
    }
    Ok(())
}

/// Edge coefficients of the normal term for the pair (u, v), one row per
/// endpoint normal: `(coef of d(u), coef of d(v))`.
fn normal_rows(
    maps: &NormalBoundaryMaps,
    k: &CameraIntrinsics,
    u: (usize, usize),
    v: (usize, usize),
) -> [(f64, f64); 2] {
    let ru = k.ray(u.0 as f64, u.1 as f64);
    let rv = k.ray(v.0 as f64, v.1 as f64);
    let nu = maps.normals.get(u.0, u.1);
    let nv = maps.normals.get(v.0, v.1);
    [(-nu.dot(&ru), nu.dot(&rv)), (-nv.dot(&ru), nv.dot(&rv))]
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Assembles the energy over `region` (all pixels if `None`), dropping
/// pixels whose coupled component contains no observed depth.
pub fn assemble(
    partial: &DepthMap,
    maps: &NormalBoundaryMaps,
    k: &CameraIntrinsics,
    params: &DepthSolveParams,
    region: Option<&Mask>,
) -> Result<DepthProblem> {
    params.validate()?;
    check_inputs(partial, maps, k)?;
    if let Some(r) = region {
        if !r.same_dims(partial) {
            return Err(Error::ShapeMismatch("solve region vs depth".into()));
        }
    }
    let (w, h) = partial.dims();
    let n = w * h;
    let in_region = |i: usize| region.is_none_or(|r| r.as_slice()[i]);
    let observed = |i: usize| params.lambda_d > 0.0 && is_observed(partial.as_slice()[i]);
    if !(0..n).any(|i| in_region(i) && observed(i)) {
        return Err(Error::NoObservedDepth);
    }

    // Unordered 4-neighbor edges inside the region, with their normal-term weight.
    let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !in_region(i) {
                continue;
            }
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx >= w || ny >= h || !in_region(ny * w + nx) {
                    continue;
                }
                let wn = (1.0 - maps.boundary.get(x, y)) * (1.0 - maps.boundary.get(nx, ny));
                edges.push((i, ny * w + nx, wn));
            }
        }
    }

    let mut parent: Vec<usize> = (0..n).collect();
    for &(a, b, wn) in &edges {
        if params.lambda_s > 0.0 || (params.lambda_n > 0.0 && wn > 0.0) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut anchored = vec![false; n];
    for i in 0..n {
        if in_region(i) && observed(i) {
            let r = find(&mut parent, i);
            anchored[r] = true;
        }
    }
    let mut index = vec![usize::MAX; n];
    let mut pixels = Vec::new();
    for i in 0..n {
        if in_region(i) && anchored[find(&mut parent, i)] {
            index[i] = pixels.len();
            pixels.push(i);
        }
    }

    let mut b = LeastSquaresBuilder::new(pixels.len());
    for (j, &i) in pixels.iter().enumerate() {
        if observed(i) {
            b.add_row(&[(j, 1.0)], partial.as_slice()[i], params.lambda_d);
        }
    }
    for &(pu, pv, wn) in &edges {
        let (ju, jv) = (index[pu], index[pv]);
        if ju == usize::MAX || jv == usize::MAX {
            continue;
        }
        b.add_row(&[(ju, 1.0), (jv, -1.0)], 0.0, params.lambda_s);
        if params.lambda_n > 0.0 && wn > 0.0 {
            let u = (pu % w, pu / w);
            let v = (pv % w, pv / w);
            for (cu, cv) in normal_rows(maps, k, u, v) {
                b.add_row(&[(ju, cu), (jv, cv)], 0.0, params.lambda_n * wn);
            }
        }
    }
    Ok(DepthProblem {
        equations: b.build(),
        pixels,
        width: w,
        height: h,
    })
}

/// Completes `partial` over every pixel.
pub fn complete_depth(
    partial: &DepthMap,
    maps: &NormalBoundaryMaps,
    k: &CameraIntrinsics,
    params: &DepthSolveParams,
) -> Result<DepthSolution> {
    complete_depth_in_region(partial, maps, k, params, None)
}

/// Completes `partial` over `region` (all pixels if `None`). Observed
/// pixels seed the initial guess; the rest start at the mean observed depth.
pub fn complete_depth_in_region(
    partial: &DepthMap,
    maps: &NormalBoundaryMaps,
    k: &CameraIntrinsics,
    params: &DepthSolveParams,
    region: Option<&Mask>,
) -> Result<DepthSolution> {
    let problem = assemble(partial, maps, k, params, region)?;
    let obs: Vec<f64> = problem
        .pixels
        .iter()
        .map(|&p| partial.as_slice()[p])
        .filter(|z| is_observed(*z))
        .collect();
    let mean = obs.iter().sum::<f64>() / obs.len().max(1) as f64;
    let mut x: Vec<f64> = problem
        .pixels
        .iter()
        .map(|&p| {
            let z = partial.as_slice()[p];
            if is_observed(z) {
                z
            } else {
                mean
            }
        })
        .collect();
    let cap = params.iteration_cap(partial.width(), partial.height());
    let eq = &problem.equations;
    let outcome = conjugate_gradient(&eq.matrix, &eq.rhs, &mut x, params.solver_tol, cap);
    if !outcome.converged {
        return Err(Error::SolverDiverged {
            iterations: outcome.iterations,
            residual: outcome.relative_residual,
        });
    }
    Ok(DepthSolution {
        energy: eq.energy(&x),
        depth: problem.scatter(&x),
        relative_residual: outcome.relative_residual,
        iterations: outcome.iterations,
        unknowns: problem.pixels.len(),
    })
}
