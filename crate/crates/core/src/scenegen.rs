//! Analytic tabletop scenes: boxes, spheres and cylinders resting on a
//! plane facing the camera.
//!
//! Everything lives in the camera frame. The table is the plane `z = table_z`
//! and objects sit on its camera side (`z <= table_z`). Scenes can be
//! rendered to depth by ray casting, sampled into partial-view clouds, and
//! annotated with analytic antipodal grasps.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::avh::GraspAnnotation;
use crate::camera::{DepthImage, Intrinsics, PointCloud};
use crate::fas::{GripperConfig, OrientedBox};
use crate::geometry::{
    orientation_from, rotation_from_quaternion, rotation_to_quaternion, sample_angles,
    OrientationTable, Rotation, Vec3,
};
use crate::par::{map_ordered, Execution};
use crate::{Error, Result};

/// Gap between the object and the palm for oracle grasps (m).
pub const ORACLE_BASE_STANDOFF: f64 = 0.005;
/// Gap between the fingertips and the far side of the object (m).
pub const ORACLE_TIP_STANDOFF: f64 = 0.005;
/// Total finger clearance added to the object width by oracle grasps (m).
pub const ORACLE_CLEARANCE: f64 = 0.01;
/// Smallest `z` component of an oracle approach direction.
pub const ORACLE_MIN_APPROACH_Z: f64 = 0.5;
/// Safety margin for the analytic collision test of oracle grasps (m).
pub const ORACLE_COLLISION_MARGIN: f64 = 0.001;
/// Table sampling extends this far beyond the object footprints (m).
pub const TABLE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box {
        half: Vec3,
    },
    Sphere {
        radius: f64,
    },
    /// Axis along local z.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let dims: Vec<f64> = match *self {
            Shape::Box { half } => half.iter().copied().collect(),
            Shape::Sphere { radius } => vec![radius],
            Shape::Cylinder {
                radius,
                half_height,
            } => vec![radius, half_height],
        };
        if dims.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::invalid("primitive dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Primitive {
    pub shape: Shape,
    pub translation: Vec3,
    pub rotation: Rotation,
}

impl Primitive {
    pub fn new(shape: Shape, translation: Vec3, rotation: Rotation) -> Result<Self> {
        shape.validate()?;
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("primitive translation must be finite"));
        }
        Ok(Self {
            shape,
            translation,
            rotation,
        })
    }

    fn local(&self, p: &Vec3) -> Vec3 {
        self.rotation
            .inverse_transform_vector(&(p - self.translation))
    }

    /// Nearest `t > 0` with `origin + t·dir` on the surface.
    pub fn ray_hit(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        let o = self.local(origin);
        let d = self.rotation.inverse_transform_vector(dir);
        match self.shape {
            Shape::Box { half } => ray_box(&o, &d, &half),
            Shape::Sphere { radius } => {
                smallest_positive_root(d.dot(&d), 2.0 * o.dot(&d), o.dot(&o) - radius * radius)
            }
            Shape::Cylinder {
                radius,
                half_height,
            } => ray_cylinder(&o, &d, radius, half_height),
        }
    }

    /// Signed distance to the surface, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let l = self.local(p);
        match self.shape {
            Shape::Box { half } => {
                let q = l.abs() - half;
                q.sup(&Vec3::zeros()).norm() + q.max().min(0.0)
            }
            Shape::Sphere { radius } => l.norm() - radius,
            Shape::Cylinder {
                radius,
                half_height,
            } => {
                let dx = l.xy().norm() - radius;
                let dz = l.z.abs() - half_height;
                let outside = (dx.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                outside + dx.max(dz).min(0.0)
            }
        }
    }

    /// `max_{x in shape} n·x`.
    pub fn support(&self, n: &Vec3) -> f64 {
        let c = n.dot(&self.translation);
        let nl = self.rotation.inverse_transform_vector(n);
        c + match self.shape {
            Shape::Box { half } => nl.abs().dot(&half),
            Shape::Sphere { radius } => radius * n.norm(),
            Shape::Cylinder {
                radius,
                half_height,
            } => nl.z.abs() * half_height + radius * nl.xy().norm(),
        }
    }

    /// Largest camera z the shape reaches.
    pub fn max_z(&self) -> f64 {
        self.support(&Vec3::z())
    }

    fn axes(&self) -> Vec<Vec3> {
        let m = self.rotation.matrix();
        match self.shape {
            Shape::Box { .. } => (0..3).map(|i| m.column(i).into_owned()).collect(),
            Shape::Sphere { .. } => Vec::new(),
            Shape::Cylinder { .. } => vec![m.column(2).into_owned()],
        }
    }

    /// Surface patches for area sampling.
    fn patches(&self) -> Vec<Patch> {
        let m = self.rotation.matrix();
        let e: [Vec3; 3] = [
            m.column(0).into_owned(),
            m.column(1).into_owned(),
            m.column(2).into_owned(),
        ];
        let c = self.translation;
        match self.shape {
            Shape::Box { half } => {
                let mut out = Vec::with_capacity(6);
                for k in 0..3 {
                    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                    for s in [-1.0, 1.0] {
                        out.push(Patch::Rect {
                            center: c + e[k] * (s * half[k]),
                            u: e[i] * half[i],
                            v: e[j] * half[j],
                            normal: e[k] * s,
                        });
                    }
                }
                out
            }
            Shape::Sphere { radius } => vec![Patch::Sphere { center: c, radius }],
            Shape::Cylinder {
                radius,
                half_height,
            } => vec![
                Patch::Barrel {
                    center: c,
                    frame: e,
                    radius,
                    half_height,
                },
                Patch::Disk {
                    center: c + e[2] * half_height,
                    frame: e,
                    radius,
                    flip: false,
                },
                Patch::Disk {
                    center: c - e[2] * half_height,
                    frame: e,
                    radius,
                    flip: true,
                },
            ],
        }
    }

    /// Radius of the footprint on the table, about the center.
    fn footprint_radius(&self) -> f64 {
        let sx = self.support(&Vec3::x()) - self.translation.x;
        let sy = self.support(&Vec3::y()) - self.translation.y;
        sx.hypot(sy)
    }
}

fn ray_box(o: &Vec3, d: &Vec3, half: &Vec3) -> Option<f64> {
    let mut t_near = f64::NEG_INFINITY;
    let mut t_far = f64::INFINITY;
    for a in 0..3 {
        if d[a] == 0.0 {
            if o[a].abs() > half[a] {
                return None;
            }
            continue;
        }
        let t1 = (-half[a] - o[a]) / d[a];
        let t2 = (half[a] - o[a]) / d[a];
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    if t_near > t_far || t_far <= 0.0 {
        return None;
    }
    Some(if t_near > 0.0 { t_near } else { t_far })
}

fn smallest_positive_root(a: f64, b: f64, c: f64) -> Option<f64> {
    if a == 0.0 {
        return None;
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    // Numerically stable pair of roots.
    let q = -0.5 * (b + b.signum() * sq);
    let (mut r1, mut r2) = (q / a, if q != 0.0 { c / q } else { q / a });
    if r1 > r2 {
        std::mem::swap(&mut r1, &mut r2);
    }
    [r1, r2].into_iter().find(|&t| t > 0.0)
}

fn ray_cylinder(o: &Vec3, d: &Vec3, radius: f64, hh: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t > 0.0 && best.is_none_or(|b| t < b) {
            best = Some(t);
        }
    };
    let a = d.x * d.x + d.y * d.y;
    if a > 0.0 {
        let b = 2.0 * (o.x * d.x + o.y * d.y);
        let c = o.x * o.x + o.y * o.y - radius * radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                if (o.z + t * d.z).abs() <= hh {
                    consider(t);
                }
            }
        }
    }
    if d.z != 0.0 {
        for z in [-hh, hh] {
            let t = (z - o.z) / d.z;
            let (x, y) = (o.x + t * d.x, o.y + t * d.y);
            if x * x + y * y <= radius * radius {
                consider(t);
            }
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
enum Patch {
    Rect {
        center: Vec3,
        u: Vec3,
        v: Vec3,
        normal: Vec3,
    },
    Sphere {
        center: Vec3,
        radius: f64,
    },
    Barrel {
        center: Vec3,
        frame: [Vec3; 3],
        radius: f64,
        half_height: f64,
    },
    Disk {
        center: Vec3,
        frame: [Vec3; 3],
        radius: f64,
        flip: bool,
    },
}

impl Patch {
    fn area(&self) -> f64 {
        match *self {
            Patch::Rect { u, v, .. } => 4.0 * u.norm() * v.norm(),
            Patch::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Patch::Barrel {
                radius,
                half_height,
                ..
            } => 4.0 * PI * radius * half_height,
            Patch::Disk { radius, .. } => PI * radius * radius,
        }
    }

    /// Uniform point on the patch and its outward normal.
    fn sample(&self, rng: &mut impl Rng) -> (Vec3, Vec3) {
        match *self {
            Patch::Rect {
                center,
                u,
                v,
                normal,
            } => {
                let (s, t): (f64, f64) =
                    (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0));
                (center + u * s + v * t, normal)
            }
            Patch::Sphere { center, radius } => {
                let z: f64 = rng.random_range(-1.0..=1.0);
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let rho = (1.0 - z * z).max(0.0).sqrt();
                let n = Vec3::new(rho * phi.cos(), rho * phi.sin(), z);
                (center + n * radius, n)
            }
            Patch::Barrel {
                center,
                frame,
                radius,
                half_height,
            } => {
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let h: f64 = rng.random_range(-half_height..=half_height);
                let n = frame[0] * phi.cos() + frame[1] * phi.sin();
                (center + n * radius + frame[2] * h, n)
            }
            Patch::Disk {
                center,
                frame,
                radius,
                flip,
            } => {
                let phi: f64 = rng.random_range(0.0..2.0 * PI);
                let r = radius * rng.random::<f64>().sqrt();
                let p = center + (frame[0] * phi.cos() + frame[1] * phi.sin()) * r;
                (p, if flip { -frame[2] } else { frame[2] })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticScene {
    pub primitives: Vec<Primitive>,
    /// Table plane `z = table_z` in the camera frame.
    pub table_z: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct PrimitiveRecord {
    kind: String,
    dims: Vec<f64>,
    translation: [f64; 3],
    rotation: [f64; 4],
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    #[serde(default)]
    table_z: Option<f64>,
    primitives: Vec<PrimitiveRecord>,
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        for p in &self.primitives {
            p.shape.validate()?;
        }
        if let Some(z) = self.table_z {
            if !(z > 0.0 && z.is_finite()) {
                return Err(Error::invalid("table must lie in front of the camera"));
            }
            if self.primitives.iter().any(|p| p.max_z() > z + 1e-9) {
                return Err(Error::invalid("primitive extends below the table"));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = SceneRecord {
            table_z: self.table_z,
            primitives: self
                .primitives
                .iter()
                .map(|p| {
                    let (kind, dims) = match p.shape {
                        Shape::Box { half } => ("box", vec![half.x, half.y, half.z]),
                        Shape::Sphere { radius } => ("sphere", vec![radius]),
                        Shape::Cylinder {
                            radius,
                            half_height,
                        } => ("cylinder", vec![radius, half_height]),
                    };
                    PrimitiveRecord {
                        kind: kind.into(),
                        dims,
                        translation: p.translation.into(),
                        rotation: rotation_to_quaternion(&p.rotation),
                    }
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&rec)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let rec: SceneRecord = serde_json::from_str(s)?;
        let mut primitives = Vec::with_capacity(rec.primitives.len());
        for p in rec.primitives {
            let shape = match (p.kind.as_str(), p.dims.as_slice()) {
                ("box", &[x, y, z]) => Shape::Box {
                    half: Vec3::new(x, y, z),
                },
                ("sphere", &[radius]) => Shape::Sphere { radius },
                ("cylinder", &[radius, half_height]) => Shape::Cylinder {
                    radius,
                    half_height,
                },
                (kind, dims) => {
                    return Err(Error::invalid(format!(
                        "unknown primitive {kind:?} with {} dims",
                        dims.len()
                    )))
                }
            };
            primitives.push(Primitive::new(
                shape,
                Vec3::from(p.translation),
                rotation_from_quaternion(p.rotation)?,
            )?);
        }
        let scene = Self {
            primitives,
            table_z: rec.table_z,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// A cluttered tabletop of `num_objects` non-overlapping, mostly
    /// graspable primitives inside the camera's view.
    pub fn random(seed: u64, num_objects: usize, intr: &Intrinsics) -> Result<Self> {
        intr.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table_z: f64 = rng.random_range(0.55..0.7);
        // Keep objects well inside the frustum at table depth.
        let reach_x = 0.6 * (intr.width as f64 / 2.0) / intr.fx * table_z;
        let reach_y = 0.6 * (intr.height as f64 / 2.0) / intr.fy * table_z;
        let (ox, oy) = (
            (intr.width as f64 / 2.0 - intr.cx) / intr.fx * table_z,
            (intr.height as f64 / 2.0 - intr.cy) / intr.fy * table_z,
        );
        const GAP: f64 = 0.04;
        let mut primitives: Vec<Primitive> = Vec::with_capacity(num_objects);
        let mut attempts = 0;
        while primitives.len() < num_objects {
            attempts += 1;
            if attempts > 10_000 {
                return Err(Error::invalid(format!(
                    "could not place {num_objects} objects without overlap"
                )));
            }
            let yaw = rng.random_range(0.0..PI);
            let spin = Rotation::from_axis_angle(&Vec3::z_axis(), yaw);
            let kind = rng.random_range(0..4);
            let (shape, lift, rotation) = match kind {
                0 => {
                    let half = Vec3::new(
                        rng.random_range(0.015..0.04),
                        rng.random_range(0.015..0.04),
                        rng.random_range(0.015..0.04),
                    );
                    (Shape::Box { half }, half.z, spin)
                }
                1 => {
                    let radius = rng.random_range(0.02..0.04);
                    (Shape::Sphere { radius }, radius, Rotation::identity())
                }
                2 => {
                    let radius = rng.random_range(0.015..0.04);
                    let half_height = rng.random_range(0.02..0.05);
                    (
                        Shape::Cylinder {
                            radius,
                            half_height,
                        },
                        half_height,
                        spin,
                    )
                }
                _ => {
                    let radius = rng.random_range(0.015..0.035);
                    let half_height = rng.random_range(0.03..0.06);
                    let lay = Rotation::from_axis_angle(&Vec3::x_axis(), PI / 2.0);
                    (
                        Shape::Cylinder {
                            radius,
                            half_height,
                        },
                        radius,
                        spin * lay,
                    )
                }
            };
            let x = ox + rng.random_range(-reach_x..reach_x);
            let y = oy + rng.random_range(-reach_y..reach_y);
            let p = Primitive::new(shape, Vec3::new(x, y, table_z - lift), rotation)?;
            let r = p.footprint_radius();
            let clear = primitives.iter().all(|q| {
                (q.translation.xy() - p.translation.xy()).norm() > r + q.footprint_radius() + GAP
            });
            if clear {
                primitives.push(p);
            }
        }
        let scene = Self {
            primitives,
            table_z: Some(table_z),
        };
        scene.validate()?;
        Ok(scene)
    }

    /// Nearest surface hit along `t·dir`, `t > 0`.
    pub fn ray_cast(&self, dir: &Vec3) -> Option<f64> {
        let origin = Vec3::zeros();
        let mut best = self.table_z.filter(|_| dir.z > 0.0).map(|z| z / dir.z);
        for p in &self.primitives {
            if let Some(t) = p.ray_hit(&origin, dir) {
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }

    /// Unsigned distance to the nearest surface, table included.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        let table = self.table_z.map_or(f64::INFINITY, |z| (p.z - z).abs());
        self.primitives
            .iter()
            .map(|q| q.signed_distance(p).abs())
            .fold(table, f64::min)
    }

    fn table_patch(&self) -> Option<Patch> {
        let z = self.table_z?;
        let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
        for p in &self.primitives {
            let r = p.footprint_radius();
            lo = lo.inf(&(p.translation - Vec3::repeat(r)));
            hi = hi.sup(&(p.translation + Vec3::repeat(r)));
        }
        if self.primitives.is_empty() {
            lo = Vec3::zeros();
            hi = Vec3::zeros();
        }
        lo -= Vec3::repeat(TABLE_MARGIN);
        hi += Vec3::repeat(TABLE_MARGIN);
        let c = (lo + hi) * 0.5;
        Some(Patch::Rect {
            center: Vec3::new(c.x, c.y, z),
            u: Vec3::x() * ((hi.x - lo.x) * 0.5),
            v: Vec3::y() * ((hi.y - lo.y) * 0.5),
            normal: -Vec3::z(),
        })
    }
}

/// Per-pixel ray cast of the scene. Hits are stored as
/// `round(z / depth_scale)`; misses and depths beyond the 16-bit range are 0.
pub fn render_depth(
    scene: &SyntheticScene,
    intr: &Intrinsics,
    exec: Execution,
) -> Result<DepthImage> {
    intr.validate()?;
    let rows: Vec<usize> = (0..intr.height).collect();
    let data: Vec<Vec<u16>> = map_ordered(&rows, exec, |&v| {
        (0..intr.width)
            .map(|u| {
                let dir = Vec3::new(
                    (u as f64 - intr.cx) / intr.fx,
                    (v as f64 - intr.cy) / intr.fy,
                    1.0,
                );
                match scene.ray_cast(&dir) {
                    Some(t) => {
                        let q = (t / intr.depth_scale).round();
                        if q >= 1.0 && q <= u16::MAX as f64 {
                            q as u16
                        } else {
                            0
                        }
                    }
                    None => 0,
                }
            })
            .collect()
    });
    DepthImage::new(intr.width, intr.height, data.concat())
}

/// Area-uniform samples on every camera-facing surface element. The count
/// per surface is Poisson with mean `density · area`; samples whose outward
/// normal faces away from the camera are dropped. Occlusion between objects
/// is not modeled. The table is sampled over the object footprints plus
/// [`TABLE_MARGIN`].
pub fn sample_surface_cloud(scene: &SyntheticScene, density: f64, seed: u64) -> Result<PointCloud> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(Error::invalid("sampling density must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut patches: Vec<Patch> = scene.primitives.iter().flat_map(|p| p.patches()).collect();
    patches.extend(scene.table_patch());
    let mut points = Vec::new();
    for patch in &patches {
        let mean = density * patch.area();
        let n = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| Error::invalid(format!("bad sampling density: {e}")))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        for _ in 0..n {
            let (p, normal) = patch.sample(&mut rng);
            if normal.dot(&p) < 0.0 && p.z > 0.0 {
                points.push(p);
            }
        }
    }
    PointCloud::new(points)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleGrasp {
    /// Index of the grasped primitive.
    pub object_id: usize,
    pub annotation: GraspAnnotation,
}

/// Convex body for separating-axis tests.
trait Support {
    fn support(&self, n: &Vec3) -> f64;
}

impl Support for Primitive {
    fn support(&self, n: &Vec3) -> f64 {
        Primitive::support(self, n)
    }
}

impl Support for OrientedBox {
    fn support(&self, n: &Vec3) -> f64 {
        let nl = self.rotation.inverse_transform_vector(n);
        n.dot(&self.center) + nl.abs().dot(&self.half_extents)
    }
}

fn box_axes(b: &OrientedBox) -> [Vec3; 3] {
    let m = b.rotation.matrix();
    [
        m.column(0).into_owned(),
        m.column(1).into_owned(),
        m.column(2).into_owned(),
    ]
}

/// Conservative: `true` unless some tested axis separates the two bodies.
fn may_intersect(b: &OrientedBox, p: &Primitive, margin: f64) -> bool {
    let ba = box_axes(b);
    let pa = p.axes();
    let mut axes: Vec<Vec3> = ba.to_vec();
    axes.extend(pa.iter().copied());
    for x in &ba {
        for y in &pa {
            axes.push(x.cross(y));
        }
    }
    axes.push(p.translation - b.center);
    if let Shape::Sphere { .. } = p.shape {
        // Toward the closest point of the box: exact for sphere-box.
        let l = b
            .rotation
            .inverse_transform_vector(&(p.translation - b.center));
        let closest = b.center + b.rotation * l.inf(&b.half_extents).sup(&(-b.half_extents));
        axes.push(p.translation - closest);
    }
    if let Shape::Cylinder { .. } = p.shape {
        let k = pa[0];
        let d = b.center - p.translation;
        axes.push(d - k * k.dot(&d));
        for x in &ba {
            axes.push(x - k * k.dot(x));
        }
    }
    !axes.iter().any(|n| {
        let len = n.norm();
        if len < 1e-9 {
            return false;
        }
        let n = n / len;
        Support::support(b, &n) + margin < -Support::support(p, &-n)
            || Support::support(p, &n) + margin < -Support::support(b, &-n)
    })
}

/// Whether a placed gripper may touch any primitive or the table.
pub fn gripper_may_collide(
    scene: &SyntheticScene,
    annotation: &GraspAnnotation,
    gripper: &GripperConfig,
    margin: f64,
) -> bool {
    let model = gripper.model(annotation.width);
    model.occupied.iter().any(|local| {
        let b = local.to_world(&annotation.translation, &annotation.rotation);
        let hits_table = scene
            .table_z
            .is_some_and(|z| Support::support(&b, &Vec3::z()) >= z - margin);
        hits_table
            || scene
                .primitives
                .iter()
                .any(|p| may_intersect(&b, p, margin))
    })
}

/// One grasp hypothesis in object-relative terms.
struct Candidate {
    approach: Vec3,
    closing: Vec3,
    /// Extent of the object along the approach, from its center.
    depth_extent: f64,
    /// Object half-size along the closing axis.
    half_width: f64,
    /// Shift of the grasp center along the height axis.
    lateral: f64,
}

fn frame_from(closing: &Vec3, approach: &Vec3) -> Rotation {
    let height = approach.cross(closing);
    Rotation::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[
        *closing, height, *approach,
    ]))
}

fn lateral_offsets(extent: f64, height: f64) -> Vec<f64> {
    let room = (extent - height / 2.0).max(0.0);
    if room < 1e-6 {
        return vec![0.0];
    }
    vec![-room, -room / 2.0, 0.0, room / 2.0, room]
}

fn candidates_for(p: &Primitive, gripper: &GripperConfig) -> Vec<Candidate> {
    let w_limit = gripper.max_width - ORACLE_CLEARANCE;
    let m = p.rotation.matrix();
    let e: [Vec3; 3] = [
        m.column(0).into_owned(),
        m.column(1).into_owned(),
        m.column(2).into_owned(),
    ];
    let mut out = Vec::new();
    match p.shape {
        Shape::Box { half } => {
            for j in 0..3 {
                for s in [-1.0, 1.0] {
                    let approach = e[j] * s;
                    for k in (0..3).filter(|&k| k != j) {
                        if 2.0 * half[k] > w_limit + 1e-12 {
                            continue;
                        }
                        let h_axis = 3 - j - k;
                        for lateral in lateral_offsets(half[h_axis], gripper.height) {
                            out.push(Candidate {
                                approach,
                                closing: e[k],
                                depth_extent: half[j],
                                half_width: half[k],
                                lateral,
                            });
                        }
                    }
                }
            }
        }
        Shape::Sphere { radius } => {
            if 2.0 * radius <= w_limit + 1e-12 {
                let table = OrientationTable::default();
                for r in table.rotations() {
                    let cols = r.matrix();
                    out.push(Candidate {
                        approach: cols.column(2).into_owned(),
                        closing: cols.column(0).into_owned(),
                        depth_extent: radius,
                        half_width: radius,
                        lateral: 0.0,
                    });
                }
            }
        }
        Shape::Cylinder {
            radius,
            half_height,
        } => {
            if 2.0 * radius <= w_limit + 1e-12 {
                let axis = e[2];
                // Along the axis, onto a cap.
                for s in [-1.0, 1.0] {
                    let approach = axis * s;
                    for angle in sample_angles(6).unwrap_or_default() {
                        if let Ok(r) = orientation_from(&approach, angle) {
                            out.push(Candidate {
                                approach,
                                closing: r.matrix().column(0).into_owned(),
                                depth_extent: half_height,
                                half_width: radius,
                                lateral: 0.0,
                            });
                        }
                    }
                }
                // Across the barrel.
                for i in 0..24 {
                    let phi = i as f64 * PI / 12.0;
                    let approach = e[0] * phi.cos() + e[1] * phi.sin();
                    let closing = axis.cross(&approach);
                    for lateral in lateral_offsets(half_height, gripper.height) {
                        out.push(Candidate {
                            approach,
                            closing,
                            depth_extent: radius,
                            half_width: radius,
                            lateral,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Places a candidate: the palm sits [`ORACLE_BASE_STANDOFF`] behind the
/// near side of the object and the fingertips stop
/// [`ORACLE_TIP_STANDOFF`] short of its far side, whichever is shallower.
fn place(p: &Primitive, c: &Candidate, gripper: &GripperConfig) -> GraspAnnotation {
    let l = gripper.finger_length;
    let e = c.depth_extent;
    let tip = (l - e - ORACLE_BASE_STANDOFF).min(e - ORACLE_TIP_STANDOFF);
    let height_axis = c.approach.cross(&c.closing);
    GraspAnnotation {
        translation: p.translation + c.approach * (tip - l / 2.0) + height_axis * c.lateral,
        rotation: frame_from(&c.closing, &c.approach),
        width: (2.0 * c.half_width + ORACLE_CLEARANCE).min(gripper.max_width),
    }
}

/// Analytic antipodal grasps, at most `per_object` per primitive. Only
/// approaches with a z component of at least [`ORACLE_MIN_APPROACH_Z`]
/// whose near surface faces the camera are kept, and the gripper must
/// clear every primitive and the table.
pub fn oracle_grasps(
    scene: &SyntheticScene,
    gripper: &GripperConfig,
    per_object: usize,
    seed: u64,
) -> Result<Vec<OracleGrasp>> {
    gripper.validate()?;
    if per_object == 0 {
        return Err(Error::invalid("need at least one grasp per object"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (object_id, p) in scene.primitives.iter().enumerate() {
        let found: Vec<GraspAnnotation> = candidates_for(p, gripper)
            .into_iter()
            .filter(|c| c.approach.z >= ORACLE_MIN_APPROACH_Z)
            .filter(|c| {
                // The near side must face the camera for rule 2 to see it.
                let near = p.translation - c.approach * c.depth_extent
                    + c.approach.cross(&c.closing) * c.lateral;
                c.approach.dot(&near) > 0.0
            })
            .map(|c| place(p, &c, gripper))
            .filter(|a| !gripper_may_collide(scene, a, gripper, ORACLE_COLLISION_MARGIN))
            .collect();
        let mut picks: Vec<usize> = (0..found.len()).collect();
        picks.shuffle(&mut rng);
        picks.truncate(per_object);
        picks.sort_unstable();
        out.extend(picks.into_iter().map(|i| OracleGrasp {
            object_id,
            annotation: found[i].clone(),
        }));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::backproject;
    use crate::fas::{check_rules, BruteForce, GraspPose};

    fn sphere(c: Vec3, r: f64) -> Primitive {
        Primitive::new(Shape::Sphere { radius: r }, c, Rotation::identity()).unwrap()
    }

    #[test]
    fn empty_scene_renders_zero() {
        let intr = Intrinsics::default();
        let d = render_depth(&SyntheticScene::default(), &intr, Execution::Parallel).unwrap();
        assert_eq!(d.valid_count(), 0);
    }

    #[test]
    fn sphere_depth_at_principal_point() {
        let intr = Intrinsics::default();
        let scene = SyntheticScene {
            primitives: vec![sphere(Vec3::new(0.0, 0.0, 2.0), 1.0)],
            table_z: None,
        };
        let d = render_depth(&scene, &intr, Execution::Sequential).unwrap();
        let z = d.get(intr.cx as usize, intr.cy as usize) as f64 * intr.depth_scale;
        assert!((z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nearest_hit_wins() {
        let boxed = Primitive::new(
            Shape::Box {
                half: Vec3::repeat(0.05),
            },
            Vec3::new(0.0, 0.0, 0.5),
            Rotation::identity(),
        )
        .unwrap();
        let scene = SyntheticScene {
            primitives: vec![sphere(Vec3::new(0.0, 0.0, 1.0), 0.2), boxed],
            table_z: Some(2.0),
        };
        let t = scene.ray_cast(&Vec3::z()).unwrap();
        assert!((t - 0.45).abs() < 1e-12);
        let miss = scene.ray_cast(&Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(miss, None);
    }

    #[test]
    fn cylinder_hits_barrel_and_cap() {
        let standing = Primitive::new(
            Shape::Cylinder {
                radius: 0.05,
                half_height: 0.1,
            },
            Vec3::new(0.0, 0.0, 1.0),
            Rotation::identity(),
        )
        .unwrap();
        assert!((standing.ray_hit(&Vec3::zeros(), &Vec3::z()).unwrap() - 0.9).abs() < 1e-12);
        let lying = Primitive::new(
            standing.shape,
            standing.translation,
            Rotation::from_axis_angle(&Vec3::x_axis(), PI / 2.0),
        )
        .unwrap();
        assert!((lying.ray_hit(&Vec3::zeros(), &Vec3::z()).unwrap() - 0.95).abs() < 1e-12);
    }

    #[test]
    fn signed_distances() {
        let b = Primitive::new(
            Shape::Box {
                half: Vec3::new(0.1, 0.2, 0.3),
            },
            Vec3::zeros(),
            Rotation::identity(),
        )
        .unwrap();
        assert!((b.signed_distance(&Vec3::new(0.3, 0.0, 0.0)) - 0.2).abs() < 1e-12);
        assert!((b.signed_distance(&Vec3::zeros()) + 0.1).abs() < 1e-12);
        let c = Primitive::new(
            Shape::Cylinder {
                radius: 0.1,
                half_height: 0.2,
            },
            Vec3::zeros(),
            Rotation::identity(),
        )
        .unwrap();
        assert!((c.signed_distance(&Vec3::new(0.0, 0.0, 0.5)) - 0.3).abs() < 1e-12);
        assert!((c.signed_distance(&Vec3::new(0.4, 0.0, 0.0)) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sphere_samples_on_surface_and_visible() {
        let c = Vec3::new(0.05, -0.02, 0.6);
        let r = 0.04;
        let scene = SyntheticScene {
            primitives: vec![sphere(c, r)],
            table_z: None,
        };
        let density = 2e5;
        let cloud = sample_surface_cloud(&scene, density, 9).unwrap();
        for p in &cloud.points {
            assert!(((p - c).norm() - r).abs() < 1e-9);
            assert!((p - c).dot(p) < 0.0);
        }
        // Visible cap seen from the origin: 2πr²(1 − r/D).
        let d = c.norm();
        let expected = density * 2.0 * PI * r * r * (1.0 - r / d);
        let sigma = expected.sqrt();
        assert!(
            ((cloud.len() as f64) - expected).abs() < 3.0 * sigma,
            "{} vs {expected}",
            cloud.len()
        );
        assert_eq!(cloud, sample_surface_cloud(&scene, density, 9).unwrap());
    }

    #[test]
    fn oracle_widths_and_clearance() {
        let gripper = GripperConfig::default();
        let table_z = 0.6;
        let cube = Primitive::new(
            Shape::Box {
                half: Vec3::new(0.02, 0.02, 0.02),
            },
            Vec3::new(0.0, 0.0, table_z - 0.02),
            Rotation::identity(),
        )
        .unwrap();
        let scene = SyntheticScene {
            primitives: vec![cube],
            table_z: Some(table_z),
        };
        let grasps = oracle_grasps(&scene, &gripper, 100, 1).unwrap();
        assert!(!grasps.is_empty());
        assert!(grasps
            .iter()
            .all(|g| (g.annotation.width - 0.05).abs() < 1e-12));

        let big = SyntheticScene {
            primitives: vec![sphere(Vec3::new(0.0, 0.0, table_z - 0.06), 0.06)],
            table_z: Some(table_z),
        };
        assert!(oracle_grasps(&big, &gripper, 10, 1).unwrap().is_empty());
    }

    #[test]
    fn oracle_grasps_pass_rules_on_dense_cloud() {
        let intr = Intrinsics::default();
        let gripper = GripperConfig::default();
        for seed in 0..4 {
            let scene = SyntheticScene::random(seed, 4, &intr).unwrap();
            let cloud = sample_surface_cloud(&scene, 1e6, seed).unwrap();
            let grasps = oracle_grasps(&scene, &gripper, 5, seed).unwrap();
            assert!(!grasps.is_empty());
            for g in &grasps {
                let pose = GraspPose {
                    translation: g.annotation.translation,
                    rotation: g.annotation.rotation,
                    width: g.annotation.width,
                };
                let r = check_rules(&BruteForce(&cloud.points), &pose, &gripper);
                assert!(r.feasible(), "seed {seed} object {} {r:?}", g.object_id);
            }
        }
    }

    #[test]
    fn rendered_points_lie_on_surfaces() {
        let intr = Intrinsics::default();
        let scene = SyntheticScene::random(3, 5, &intr).unwrap();
        let depth = render_depth(&scene, &intr, Execution::Parallel).unwrap();
        let cloud = backproject(&depth, &intr).unwrap();
        assert!(cloud.len() > 1000);
        let bound = 0.5 * intr.depth_scale + 1e-4;
        for p in &cloud.points {
            assert!(scene.surface_distance(p) < bound);
        }
    }

    #[test]
    fn scene_json_round_trip() {
        let intr = Intrinsics::default();
        let scene = SyntheticScene::random(11, 5, &intr).unwrap();
        assert_eq!(scene.primitives.len(), 5);
        let back = SyntheticScene::from_json(&scene.to_json().unwrap()).unwrap();
        assert_eq!(back.primitives.len(), 5);
        for (a, b) in scene.primitives.iter().zip(&back.primitives) {
            assert_eq!(a.shape, b.shape);
            assert_eq!(a.translation, b.translation);
            assert!((a.rotation.matrix() - b.rotation.matrix()).norm() < 1e-12);
        }
        assert!(SyntheticScene::from_json(r#"{"primitives":[{"kind":"cone","dims":[1],"translation":[0,0,1],"rotation":[1,0,0,0]}]}"#).is_err());
    }

    #[test]
    fn random_scene_is_deterministic() {
        let intr = Intrinsics::default();
        assert_eq!(
            SyntheticScene::random(5, 3, &intr).unwrap(),
            SyntheticScene::random(5, 3, &intr).unwrap()
        );
    }
}
