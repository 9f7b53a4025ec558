//! Depth-only software rasterizer with perspective-correct interpolation.

use nalgebra::Vector3;

use crate::geometry::{CameraIntrinsics, Pose};
use crate::grid::{DepthMap, Grid};

use super::frustum::FrustumMesh;

const NEAR_PLANE: f64 = 1e-4;

/// Renders the nearest surface depth of `mesh` as seen from `pose`.
/// Pixels covered by no triangle are `+∞`.
pub fn render_frustum_depth(
    mesh: &FrustumMesh,
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
) -> DepthMap {
    let mut zbuf = Grid::filled(intrinsics.width, intrinsics.height, f64::INFINITY);
    let cam: Vec<Vector3<f64>> = mesh.vertices.iter().map(|v| pose.apply(v)).collect();
    let mut poly = Vec::with_capacity(4);
    for tri in &mesh.triangles {
        let verts = [
            cam[tri[0] as usize],
            cam[tri[1] as usize],
            cam[tri[2] as usize],
        ];
        if verts.iter().all(|v| v.z <= NEAR_PLANE) {
            continue;
        }
        if verts.iter().all(|v| v.z > NEAR_PLANE) {
            rasterize_triangle(&mut zbuf, intrinsics, &verts);
            continue;
        }
        clip_near(&verts, &mut poly);
        for i in 1..poly.len().saturating_sub(1) {
            rasterize_triangle(&mut zbuf, intrinsics, &[poly[0], poly[i], poly[i + 1]]);
        }
    }
    zbuf
}

/// Sutherland–Hodgman clip of a triangle against `z > NEAR_PLANE`.
fn clip_near(tri: &[Vector3<f64>; 3], out: &mut Vec<Vector3<f64>>) {
    out.clear();
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z > NEAR_PLANE;
        let b_in = b.z > NEAR_PLANE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE * (1.0 + 1e-9);
            out.push(p);
        }
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Rasterizes one camera-frame triangle (all vertices in front of the near
/// plane) into `zbuf`, sampling at pixel centers.
pub fn rasterize_triangle(zbuf: &mut DepthMap, k: &CameraIntrinsics, verts: &[Vector3<f64>; 3]) {
    let mut sx = [0.0; 3];
    let mut sy = [0.0; 3];
    let mut inv_z = [0.0; 3];
    for (i, v) in verts.iter().enumerate() {
        sx[i] = k.fx * v.x / v.z + k.cx;
        sy[i] = k.fy * v.y / v.z + k.cy;
        inv_z[i] = 1.0 / v.z;
    }
    let area = edge(sx[0], sy[0], sx[1], sy[1], sx[2], sy[2]);
    if !area.is_finite() || area.abs() < 1e-12 {
        return;
    }
    let min_x = sx
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .ceil()
        .max(0.0);
    let max_x = sx
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(k.width as f64 - 1.0);
    let min_y = sy
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .ceil()
        .max(0.0);
    let max_y = sy
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
        .floor()
        .min(k.height as f64 - 1.0);
    if min_x > max_x || min_y > max_y {
        return;
    }
    let sign = area.signum();
    let inv_area = 1.0 / area;
    for y in min_y as usize..=max_y as usize {
        let py = y as f64;
        for x in min_x as usize..=max_x as usize {
            let px = x as f64;
            let w0 = edge(sx[1], sy[1], sx[2], sy[2], px, py);
            let w1 = edge(sx[2], sy[2], sx[0], sy[0], px, py);
            let w2 = edge(sx[0], sy[0], sx[1], sy[1], px, py);
            if w0 * sign < 0.0 || w1 * sign < 0.0 || w2 * sign < 0.0 {
                continue;
            }
            let iz = (w0 * inv_z[0] + w1 * inv_z[1] + w2 * inv_z[2]) * inv_area;
            if iz <= 0.0 {
                continue;
            }
            let z = 1.0 / iz;
            let cell = zbuf.get_mut(x, y);
            if z < *cell {
                *cell = z;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(50.0, 50.0, 16.0, 16.0, 32, 32).unwrap()
    }

    fn mesh(verts: Vec<Vector3<f64>>) -> FrustumMesh {
        FrustumMesh {
            vertices: verts,
            triangles: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn fronto_parallel_triangle_depth() {
        let m = mesh(vec![
            Vector3::new(-1.0, -1.0, 2.0),
            Vector3::new(1.0, -1.0, 2.0),
            Vector3::new(0.0, 1.0, 2.0),
        ]);
        let d = render_frustum_depth(&m, &k(), &Pose::identity());
        assert!((d.get(16, 16) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn slanted_triangle_matches_ray_plane_intersection() {
        let verts = vec![
            Vector3::new(-1.0, -1.0, 1.5),
            Vector3::new(1.5, -1.0, 2.5),
            Vector3::new(0.0, 1.5, 2.0),
        ];
        let n = (verts[1] - verts[0]).cross(&(verts[2] - verts[0]));
        let rho = n.dot(&verts[0]);
        let intr = k();
        let d = render_frustum_depth(&mesh(verts), &intr, &Pose::identity());
        let mut covered = 0;
        for y in 0..32 {
            for x in 0..32 {
                let z = *d.get(x, y);
                if z.is_finite() {
                    covered += 1;
                    let r = intr.ray(x as f64, y as f64);
                    let expected = rho / n.dot(&r);
                    assert!(
                        (z - expected).abs() < 1e-9,
                        "pixel ({x},{y}): {z} vs {expected}"
                    );
                }
            }
        }
        assert!(covered > 50);
    }

    #[test]
    fn empty_mesh_renders_infinity() {
        let d = render_frustum_depth(&FrustumMesh::default(), &k(), &Pose::identity());
        assert!(d.iter().all(|z| *z == f64::INFINITY));
    }

    #[test]
    fn triangle_behind_camera_is_invisible() {
        let m = mesh(vec![
            Vector3::new(-1.0, -1.0, -2.0),
            Vector3::new(1.0, -1.0, -2.0),
            Vector3::new(0.0, 1.0, -2.0),
        ]);
        let d = render_frustum_depth(&m, &k(), &Pose::identity());
        assert!(d.iter().all(|z| *z == f64::INFINITY));
    }

    #[test]
    fn straddling_triangle_is_clipped_not_dropped() {
        // One vertex behind the camera; the visible part still covers the center.
        let m = mesh(vec![
            Vector3::new(-0.5, -0.5, 1.0),
            Vector3::new(0.5, -0.5, 1.0),
            Vector3::new(0.0, 1.5, -1.0),
        ]);
        let d = render_frustum_depth(&m, &k(), &Pose::identity());
        assert!(d.get(16, 16).is_finite());
        assert!(d.iter().all(|z| *z > 0.0));
    }
}
