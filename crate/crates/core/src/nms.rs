//! Greedy pose-space non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::fas::Detection;
use crate::geometry::grasp_rotation_distance;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    /// Translation radius (m).
    pub t_trans: f64,
    /// Rotation radius (rad).
    pub t_rot: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            t_trans: 0.03,
            t_rot: 30f64.to_radians(),
        }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_trans > 0.0 && self.t_rot > 0.0) {
            return Err(Error::invalid("NMS thresholds must be positive"));
        }
        Ok(())
    }

    /// Whether `a` suppresses `b` (and vice versa; the test is symmetric).
    pub fn overlaps(&self, a: &Detection, b: &Detection) -> bool {
        (a.pose.translation - b.pose.translation).norm() < self.t_trans
            && grasp_rotation_distance(&a.pose.rotation, &b.pose.rotation) < self.t_rot
    }
}

/// Keeps each grasp unless an already kept, higher-confidence grasp is
/// within both thresholds. Output is in acceptance order (confidence
/// descending, input order among ties).
pub fn gpnms(grasps: &[Detection], cfg: &NmsConfig) -> Vec<Detection> {
    gpnms_indices(grasps, cfg)
        .into_iter()
        .map(|i| grasps[i])
        .collect()
}

/// Indices of the grasps [`gpnms`] keeps, in acceptance order.
pub fn gpnms_indices(grasps: &[Detection], cfg: &NmsConfig) -> Vec<usize> {
    let mut order: Vec<usize> = (0..grasps.len()).collect();
    order.sort_by(|&a, &b| grasps[b].confidence.total_cmp(&grasps[a].confidence));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        if !kept.iter().any(|&k| cfg.overlaps(&grasps[k], &grasps[i])) {
            kept.push(i);
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fas::GraspPose;
    use crate::geometry::{orientation_from, Rotation, Vec3};

    fn det(x: f64, angle: f64, confidence: f32) -> Detection {
        Detection {
            pose: GraspPose {
                translation: Vec3::new(x, 0.0, 0.5),
                rotation: orientation_from(&Vec3::z(), angle).unwrap(),
                width: 0.05,
            },
            confidence,
        }
    }

    #[test]
    fn duplicate_is_suppressed() {
        let out = gpnms(
            &[det(0.0, 0.0, 0.8), det(0.0, 0.0, 0.9)],
            &NmsConfig::default(),
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.9);
    }

    #[test]
    fn distant_grasps_survive() {
        let out = gpnms(
            &[det(0.0, 0.0, 0.9), det(1.0, 0.0, 0.8)],
            &NmsConfig::default(),
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn chain_keeps_ends() {
        // A-B and B-C are 2 cm apart, A-C is 4 cm apart.
        let a = det(0.0, 0.0, 0.9);
        let b = det(0.02, 0.0, 0.8);
        let c = det(0.04, 0.0, 0.7);
        let out = gpnms(&[c, b, a], &NmsConfig::default());
        assert_eq!(out, vec![a, c]);
    }

    #[test]
    fn flipped_grasp_is_a_duplicate() {
        let a = det(0.0, 0.1, 0.9);
        let mut b = det(0.0, 0.1, 0.5);
        let flip = Rotation::from_axis_angle(&Vec3::z_axis(), std::f64::consts::PI);
        b.pose.rotation *= flip;
        assert_eq!(gpnms(&[a, b], &NmsConfig::default()).len(), 1);
    }

    #[test]
    fn rotation_alone_separates() {
        let out = gpnms(
            &[det(0.0, 0.0, 0.9), det(0.0, 1.0, 0.8)],
            &NmsConfig::default(),
        );
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn rejects_bad_thresholds() {
        assert!(NmsConfig {
            t_trans: 0.0,
            t_rot: 1.0
        }
        .validate()
        .is_err());
    }
}
