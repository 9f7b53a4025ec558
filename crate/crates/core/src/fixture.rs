//! Analytic test scenes: ray-cast RGB-D frames with exact ground truth,
//! including surfaces the camera cannot see.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, ColoredPointCloud, Pose, RgbdFrame};
use crate::grid::{Grid, Rgb};
use crate::io::{write_ply, SceneInput, DEFAULT_DEPTH_SCALE};
use crate::metrics::DEFAULT_CROP_BUFFER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    Plane,
    BoxOnPlane,
    SphereOnPlane,
}

impl std::str::FromStr for FixtureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plane" => Ok(Self::Plane),
            "box_on_plane" => Ok(Self::BoxOnPlane),
            "sphere_on_plane" => Ok(Self::SphereOnPlane),
            _ => Err(Error::InvalidInput(format!(
                "unknown fixture kind {s:?} (expected plane, box_on_plane or sphere_on_plane)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureParams {
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    /// Ground-truth surface sample spacing, meters.
    pub gt_spacing: f64,
    pub crop_buffer: f64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            focal: 150.0,
            gt_spacing: 0.004,
            crop_buffer: DEFAULT_CROP_BUFFER,
        }
    }
}

/// Two-tone checkerboard in a surface's local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checker {
    pub a: Rgb,
    pub b: Rgb,
    pub cell: f64,
}

impl Checker {
    pub fn flat(c: Rgb) -> Self {
        Self {
            a: c,
            b: c,
            cell: 1.0,
        }
    }

    fn at(&self, s: f64, t: f64) -> Rgb {
        let parity =
            ((s / self.cell).floor() as i64 + (t / self.cell).floor() as i64).rem_euclid(2);
        if parity == 0 {
            self.a
        } else {
            self.b
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Parallelogram `center + s·half_u + t·half_v`, `|s|, |t| ≤ 1`.
    Rect {
        center: Vector3<f64>,
        half_u: Vector3<f64>,
        half_v: Vector3<f64>,
        texture: Checker,
    },
    /// Axis-aligned box with one flat color per face in the order
    /// −x, +x, −y, +y, −z, +z. The −z face is treated as resting on a
    /// support and left out of the ground truth.
    Cuboid {
        min: Vector3<f64>,
        max: Vector3<f64>,
        faces: [Rgb; 6],
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
        color: Rgb,
    },
}

impl Primitive {
    /// Nearest hit `(t, color)` of `origin + t·dir` with `t > 0`.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, Rgb)> {
        match self {
            Primitive::Rect {
                center,
                half_u,
                half_v,
                texture,
            } => {
                let n = half_u.cross(half_v);
                let denom = n.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = n.dot(&(center - origin)) / denom;
                if t <= 0.0 {
                    return None;
                }
                let d = origin + dir * t - center;
                let s = d.dot(half_u) / half_u.norm_squared();
                let q = d.dot(half_v) / half_v.norm_squared();
                if s.abs() > 1.0 || q.abs() > 1.0 {
                    return None;
                }
                Some((t, texture.at(s * half_u.norm(), q * half_v.norm())))
            }
            Primitive::Cuboid { min, max, faces } => {
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let mut enter_face = 0;
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if origin[a] < min[a] || origin[a] > max[a] {
                            return None;
                        }
                        continue;
                    }
                    let ta = (min[a] - origin[a]) / dir[a];
                    let tb = (max[a] - origin[a]) / dir[a];
                    let (near, far, face) = if ta < tb {
                        (ta, tb, 2 * a)
                    } else {
                        (tb, ta, 2 * a + 1)
                    };
                    if near > t0 {
                        t0 = near;
                        enter_face = face;
                    }
                    t1 = t1.min(far);
                }
                (t0 <= t1 && t0 > 0.0).then(|| (t0, faces[enter_face]))
            }
            Primitive::Sphere {
                center,
                radius,
                color,
            } => {
                let oc = origin - center;
                let a = dir.norm_squared();
                let b = oc.dot(dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(-b - sq) / a, (-b + sq) / a]
                    .into_iter()
                    .find(|t| *t > 0.0)?;
                Some((t, *color))
            }
        }
    }

    /// Surface samples on a grid of roughly `spacing` meters.
    fn sample(&self, spacing: f64, out: &mut ColoredPointCloud) {
        let steps = |len: f64| ((len / spacing).ceil() as usize).max(1);
        match self {
            Primitive::Rect {
                center,
                half_u,
                half_v,
                texture,
            } => {
                let (nu, nv) = (steps(2.0 * half_u.norm()), steps(2.0 * half_v.norm()));
                for i in 0..=nu {
                    for j in 0..=nv {
                        let s = -1.0 + 2.0 * i as f64 / nu as f64;
                        let t = -1.0 + 2.0 * j as f64 / nv as f64;
                        let p = center + half_u * s + half_v * t;
                        out.push(p, texture.at(s * half_u.norm(), t * half_v.norm()));
                    }
                }
            }
            Primitive::Cuboid { min, max, faces } => {
                let ext = max - min;
                for (face, color) in faces.iter().enumerate() {
                    if face == 4 {
                        continue;
                    }
                    let axis = face / 2;
                    let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
                    let (n1, n2) = (steps(ext[a1]), steps(ext[a2]));
                    for i in 0..=n1 {
                        for j in 0..=n2 {
                            let mut p = *min;
                            p[axis] = if face % 2 == 0 { min[axis] } else { max[axis] };
                            p[a1] = min[a1] + ext[a1] * i as f64 / n1 as f64;
                            p[a2] = min[a2] + ext[a2] * j as f64 / n2 as f64;
                            out.push(p, *color);
                        }
                    }
                }
            }
            Primitive::Sphere {
                center,
                radius,
                color,
            } => {
                // Latitude rings with longitude counts proportional to ring length.
                let rings = steps(std::f64::consts::PI * radius);
                for i in 0..=rings {
                    let theta = std::f64::consts::PI * i as f64 / rings as f64;
                    let ring_r = radius * theta.sin();
                    let n = steps(std::f64::consts::TAU * ring_r);
                    for j in 0..n {
                        let phi = std::f64::consts::TAU * j as f64 / n as f64;
                        let d = Vector3::new(
                            theta.sin() * phi.cos(),
                            theta.sin() * phi.sin(),
                            theta.cos(),
                        );
                        out.push(center + d * *radius, *color);
                    }
                }
            }
        }
    }
}

/// A camera looking at a set of primitives given in a world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub intrinsics: CameraIntrinsics,
    /// World → camera.
    pub pose: Pose,
    pub primitives: Vec<Primitive>,
}

impl Scene {
    /// Nearest hit along the ray through pixel `(x, y)`: camera-frame depth and color.
    pub fn cast(&self, x: f64, y: f64) -> Option<(f64, Rgb)> {
        let r = self.intrinsics.ray(x, y);
        let origin = self.pose.camera_center();
        let dir = self.pose.rotation.transpose() * r;
        // With r.z = 1 the ray parameter equals camera-frame depth.
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(&origin, &dir))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    pub fn render(&self) -> Result<RgbdFrame> {
        let (w, h) = (self.intrinsics.width, self.intrinsics.height);
        let mut depth = Grid::filled(w, h, 0.0);
        let mut rgb = Grid::filled(w, h, [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                if let Some((d, c)) = self.cast(x as f64, y as f64) {
                    depth.set(x, y, d);
                    rgb.set(x, y, c);
                }
            }
        }
        RgbdFrame::new(rgb, depth, self.intrinsics)
    }

    /// Samples of every primitive (hidden surfaces included) in the camera frame.
    pub fn surface_samples(&self, spacing: f64) -> ColoredPointCloud {
        let mut world = ColoredPointCloud::default();
        for p in &self.primitives {
            p.sample(spacing, &mut world);
        }
        crate::geometry::transform(&world, &self.pose)
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub kind: FixtureKind,
    pub scene: Scene,
    pub frame: RgbdFrame,
    /// Exact surfaces in the input camera frame, cropped around the object.
    pub ground_truth: ColoredPointCloud,
    /// The object alone (empty for the plane fixture).
    pub object: ColoredPointCloud,
}

const TABLE_LIGHT: Rgb = [200, 196, 188];
const TABLE_DARK: Rgb = [120, 116, 110];

fn table(half: f64) -> Primitive {
    Primitive::Rect {
        center: Vector3::zeros(),
        half_u: Vector3::new(half, 0.0, 0.0),
        half_v: Vector3::new(0.0, half, 0.0),
        texture: Checker {
            a: TABLE_LIGHT,
            b: TABLE_DARK,
            cell: 0.05,
        },
    }
}

fn tabletop_camera() -> Result<Pose> {
    Pose::look_at(
        &Vector3::new(0.0, -0.55, 0.5),
        &Vector3::new(0.0, 0.0, 0.05),
        &Vector3::new(0.0, 0.0, -1.0),
    )
}

fn crop(cloud: &ColoredPointCloud, lo: Vector3<f64>, hi: Vector3<f64>) -> ColoredPointCloud {
    let mut out = ColoredPointCloud::default();
    for (p, c) in cloud.points.iter().zip(&cloud.colors) {
        if (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i]) {
            out.push(*p, *c);
        }
    }
    out
}

pub fn make_fixture(kind: FixtureKind, params: &FixtureParams) -> Result<Fixture> {
    let k = CameraIntrinsics::new(
        params.focal,
        params.focal,
        (params.width as f64 - 1.0) / 2.0,
        (params.height as f64 - 1.0) / 2.0,
        params.width,
        params.height,
    )?;
    if !(params.gt_spacing > 0.0) {
        return Err(Error::InvalidInput("gt_spacing must be positive".into()));
    }
    let (pose, object) = match kind {
        FixtureKind::Plane => (Pose::identity(), None),
        FixtureKind::BoxOnPlane => (
            tabletop_camera()?,
            Some(Primitive::Cuboid {
                min: Vector3::new(-0.06, -0.06, 0.0),
                max: Vector3::new(0.06, 0.06, 0.12),
                faces: [
                    [200, 40, 40],
                    [40, 160, 60],
                    [50, 70, 200],
                    [220, 200, 40],
                    [90, 90, 90],
                    [230, 120, 30],
                ],
            }),
        ),
        FixtureKind::SphereOnPlane => (
            tabletop_camera()?,
            Some(Primitive::Sphere {
                center: Vector3::new(0.0, 0.0, 0.07),
                radius: 0.07,
                color: [40, 120, 210],
            }),
        ),
    };
    let support = match kind {
        // A wall facing the camera, 1 m away, wider than the view.
        FixtureKind::Plane => Primitive::Rect {
            center: Vector3::new(0.0, 0.0, 1.0),
            half_u: Vector3::new(1.0, 0.0, 0.0),
            half_v: Vector3::new(0.0, 1.0, 0.0),
            texture: Checker {
                a: TABLE_LIGHT,
                b: TABLE_DARK,
                cell: 0.05,
            },
        },
        _ => table(2.0),
    };
    let mut primitives = vec![support];
    primitives.extend(object.clone());
    let scene = Scene {
        intrinsics: k,
        pose,
        primitives,
    };
    let frame = scene.render()?;

    let object_cloud = match &object {
        Some(o) => {
            let only = Scene {
                primitives: vec![o.clone()],
                ..scene.clone()
            };
            only.surface_samples(params.gt_spacing)
        }
        None => ColoredPointCloud::default(),
    };
    let support_only = Scene {
        primitives: vec![scene.primitives[0].clone()],
        ..scene.clone()
    };
    let ground_truth = match object_cloud.bounds() {
        Some((lo, hi)) => {
            let b = Vector3::repeat(params.crop_buffer);
            // The table is sampled only where the crop box can reach it.
            let mut gt = crop(
                &support_only.surface_samples(params.gt_spacing),
                lo - b,
                hi + b,
            );
            gt.extend_from(&object_cloud);
            gt
        }
        None => support_only.surface_samples(params.gt_spacing),
    };
    Ok(Fixture {
        kind,
        scene,
        frame,
        ground_truth,
        object: object_cloud,
    })
}

/// Files written by [`Fixture::write`].
#[derive(Debug, Clone)]
pub struct FixtureFiles {
    pub input: SceneInput,
    pub ground_truth: PathBuf,
}

impl Fixture {
    /// Writes `rgb.png`, `depth.png` (16-bit millimeters), `intrinsics.json`
    /// and `gt.ply` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<FixtureFiles> {
        let input = SceneInput::save(dir, &self.frame, DEFAULT_DEPTH_SCALE)?;
        let gt = dir.join("gt.ply");
        write_ply(&gt, &self.ground_truth)?;
        Ok(FixtureFiles {
            input,
            ground_truth: gt,
        })
    }
}
