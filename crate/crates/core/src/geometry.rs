//! Rotation discretization for the angle-view heatmap.
//!
//! A gripper orientation is split into an approach *view* (a unit vector in
//! the `z >= 0` hemisphere of the camera frame) and an *in-plane angle* about
//! that view. Both are sampled on fixed grids; the product of the two grids is
//! the set of orientation classes, laid out view-major.
//!
//! Gripper frame convention used throughout the crate: column 0 of a rotation
//! is the closing axis (finger to finger), column 1 the finger height axis and
//! column 2 the approach axis.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Rotation = Rotation3<f64>;

/// Default number of approach views.
pub const DEFAULT_VIEWS: usize = 60;
/// Default number of in-plane angles.
pub const DEFAULT_ANGLES: usize = 6;

const UNIT_TOL: f64 = 1e-9;

/// Fibonacci lattice over the `z > 0` hemisphere.
pub fn sample_views(count: usize) -> Result<Vec<Vec3>> {
    if count == 0 {
        return Err(Error::invalid("view count must be at least 1"));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    Ok((0..count)
        .map(|i| {
            let z = (i as f64 + 0.5) / count as f64;
            let phi = i as f64 * golden;
            let r = (1.0 - z * z).sqrt();
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect())
}

/// `count` evenly spaced angles covering `[0, π)`.
///
/// Half a turn suffices: a parallel-jaw gripper rotated by π about its
/// approach axis occupies the same volume.
pub fn sample_angles(count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("angle count must be at least 1"));
    }
    Ok((0..count).map(|j| j as f64 * PI / count as f64).collect())
}

/// Reference closing axis for a view, before any in-plane rotation.
pub fn canonical_closing_axis(view: &Vec3) -> Vec3 {
    let x = Vec3::x();
    let seed = if x.dot(view).abs() > 0.99 {
        Vec3::y()
    } else {
        x
    };
    (seed - view * seed.dot(view)).normalize()
}

/// Gripper rotation whose approach axis is `view` and whose closing axis is
/// the canonical axis turned by `angle` about the view.
pub fn orientation_from(view: &Vec3, angle: f64) -> Result<Rotation> {
    if (view.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!(
            "view must be unit length, got norm {}",
            view.norm()
        )));
    }
    if !angle.is_finite() {
        return Err(Error::invalid("angle must be finite"));
    }
    let c0 = canonical_closing_axis(view);
    // c0 is orthogonal to view, so Rodrigues reduces to two terms.
    let closing = c0 * angle.cos() + view.cross(&c0) * angle.sin();
    let closing = closing.normalize();
    let height = view.cross(&closing);
    Ok(Rotation::from_matrix_unchecked(Matrix3::from_columns(&[
        closing, height, *view,
    ])))
}

#[inline]
pub fn closing_axis(r: &Rotation) -> Vec3 {
    r.matrix().column(0).into_owned()
}

#[inline]
pub fn approach_axis(r: &Rotation) -> Vec3 {
    r.matrix().column(2).into_owned()
}

/// Angle of `closing` about `view`, measured from the view's canonical axis.
/// `closing` is projected onto the plane orthogonal to `view` first.
pub fn in_plane_angle(view: &Vec3, closing: &Vec3) -> f64 {
    let c0 = canonical_closing_axis(view);
    let s0 = view.cross(&c0);
    closing.dot(&s0).atan2(closing.dot(&c0))
}

/// Distance between two in-plane angles modulo π.
pub fn angle_distance_mod_pi(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Geodesic distance on SO(3), in radians.
pub fn rotation_distance(a: &Rotation, b: &Rotation) -> f64 {
    let rel = a.matrix().transpose() * b.matrix();
    ((rel.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
}

/// Geodesic distance that treats a π turn about the approach axis as
/// identity, matching the symmetry of a parallel-jaw gripper.
pub fn grasp_rotation_distance(a: &Rotation, b: &Rotation) -> f64 {
    let flip = Matrix3::from_diagonal(&Vec3::new(-1.0, -1.0, 1.0));
    let b_flipped = Rotation::from_matrix_unchecked(b.matrix() * flip);
    rotation_distance(a, b).min(rotation_distance(a, &b_flipped))
}

/// `[w, x, y, z]` unit quaternion for a rotation.
pub fn rotation_to_quaternion(r: &Rotation) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(r);
    let q = q.quaternion();
    [q.w, q.i, q.j, q.k]
}

/// Rotation from a `[w, x, y, z]` quaternion; the quaternion is normalized.
pub fn rotation_from_quaternion(q: [f64; 4]) -> Result<Rotation> {
    let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    let norm = quat.norm();
    if !norm.is_finite() || norm < 1e-12 {
        return Err(Error::invalid("quaternion must be finite and non-zero"));
    }
    Ok(UnitQuaternion::from_quaternion(quat).to_rotation_matrix())
}

/// Checks `RᵀR = I` and `det R = +1` within `tol`.
pub fn is_proper_rotation(m: &Matrix3<f64>, tol: f64) -> bool {
    let gram = m.transpose() * m;
    (gram - Matrix3::identity()).abs().max() <= tol && (m.determinant() - 1.0).abs() <= tol
}

/// The discrete orientation classes, `index = view_idx * num_angles + angle_idx`.
#[derive(Debug, Clone)]
pub struct OrientationTable {
    views: Vec<Vec3>,
    angles: Vec<f64>,
    rotations: Vec<Rotation>,
}

impl Default for OrientationTable {
    fn default() -> Self {
        Self::new(DEFAULT_VIEWS, DEFAULT_ANGLES).expect("default table dimensions are valid")
    }
}

impl OrientationTable {
    pub fn new(num_views: usize, num_angles: usize) -> Result<Self> {
        let views = sample_views(num_views)?;
        let angles = sample_angles(num_angles)?;
        let mut rotations = Vec::with_capacity(num_views * num_angles);
        for v in &views {
            for &a in &angles {
                rotations.push(orientation_from(v, a)?);
            }
        }
        Ok(Self {
            views,
            angles,
            rotations,
        })
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn num_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn num_classes(&self) -> usize {
        self.rotations.len()
    }

    pub fn views(&self) -> &[Vec3] {
        &self.views
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn rotations(&self) -> &[Rotation] {
        &self.rotations
    }

    pub fn rotation(&self, class: usize) -> Option<&Rotation> {
        self.rotations.get(class)
    }

    pub fn class_index(&self, view_idx: usize, angle_idx: usize) -> Result<usize> {
        if view_idx >= self.num_views() || angle_idx >= self.num_angles() {
            return Err(Error::invalid(format!(
                "class ({view_idx}, {angle_idx}) outside {}x{} table",
                self.num_views(),
                self.num_angles()
            )));
        }
        Ok(view_idx * self.num_angles() + angle_idx)
    }

    pub fn class_pair(&self, class: usize) -> Result<(usize, usize)> {
        if class >= self.num_classes() {
            return Err(Error::invalid(format!(
                "class {class} outside table of {}",
                self.num_classes()
            )));
        }
        Ok((class / self.num_angles(), class % self.num_angles()))
    }

    /// Nearest `(view_idx, angle_idx)` for an arbitrary rotation. Ties go to
    /// the lower index.
    pub fn nearest_class(&self, r: &Rotation) -> (usize, usize) {
        let approach = approach_axis(r);
        let mut best_view = 0;
        let mut best_dot = f64::NEG_INFINITY;
        for (i, v) in self.views.iter().enumerate() {
            let d = v.dot(&approach);
            if d > best_dot {
                best_dot = d;
                best_view = i;
            }
        }
        let theta = in_plane_angle(&self.views[best_view], &closing_axis(r));
        let mut best_angle = 0;
        let mut best_dist = f64::INFINITY;
        for (j, &a) in self.angles.iter().enumerate() {
            let d = angle_distance_mod_pi(theta, a);
            if d < best_dist {
                best_dist = d;
                best_angle = j;
            }
        }
        (best_view, best_angle)
    }

    /// Flat class index of [`Self::nearest_class`].
    pub fn nearest_class_index(&self, r: &Rotation) -> usize {
        let (v, a) = self.nearest_class(r);
        v * self.num_angles() + a
    }

    /// Largest nearest-neighbour angle between views (radians). Any approach
    /// direction in the hemisphere lies within this angle of some view.
    pub fn view_spacing(&self) -> f64 {
        if self.views.len() < 2 {
            return PI / 2.0;
        }
        self.views
            .iter()
            .enumerate()
            .map(|(i, a)| {
                self.views
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, b)| a.dot(b).clamp(-1.0, 1.0).acos())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    }

    /// Spacing between consecutive in-plane angles (radians).
    pub fn angle_step(&self) -> f64 {
        PI / self.num_angles() as f64
    }
}
