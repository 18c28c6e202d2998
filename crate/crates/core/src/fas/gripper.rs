//! Parallel-jaw gripper geometry.
//!
//! All boxes are axis-aligned in the gripper frame, whose origin is the
//! grasp center (middle of the grasping space):
//!
//! ```text
//!            closing axis (x) →
//!   ┌──┐                    ┌──┐   ↑ approach axis (z) points
//!   │L │   grasping space   │ R│   │ into the scene, fingers
//!   │  │     w × l × h      │  │   │ span z ∈ [-l/2, l/2]
//!   ├──┴────────────────────┴──┤
//!   │           base           │   z ∈ [-l/2 - b_d, -l/2]
//!   └──────────────────────────┘
//! ```
//!
//! Every box spans `y ∈ [-h/2, h/2]`. Boxes are closed, so the grasping
//! space shares its side faces with the fingers and its back face with the
//! base; their interiors are disjoint.

use serde::{Deserialize, Serialize};

use crate::fas::index::OrientedBox;
use crate::geometry::{Rotation, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperConfig {
    /// Finger height `h` (m).
    pub height: f64,
    /// Finger length along the approach axis `l` (m).
    pub finger_length: f64,
    /// Maximum opening `w_max` (m).
    pub max_width: f64,
    /// Finger thickness along the closing axis (m).
    pub finger_thickness: f64,
    /// Depth of the palm behind the fingers (m).
    pub base_depth: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        Self {
            height: 0.02,
            finger_length: 0.03,
            max_width: 0.10,
            finger_thickness: 0.01,
            base_depth: 0.02,
        }
    }
}

impl GripperConfig {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.height,
            self.finger_length,
            self.max_width,
            self.finger_thickness,
            self.base_depth,
        ];
        if all.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("gripper dimensions must be positive"));
        }
        Ok(())
    }

    /// Parses `h,l,w_max,t_f,b_d` in meters.
    pub fn parse_csv(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("bad gripper string {s:?}")))?;
        let [height, finger_length, max_width, finger_thickness, base_depth] = vals[..] else {
            return Err(Error::invalid(
                "gripper string needs five values: h,l,w_max,t_f,b_d",
            ));
        };
        let cfg = Self {
            height,
            finger_length,
            max_width,
            finger_thickness,
            base_depth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Length of the diagonal of the gripper's outer bound at full opening.
    pub fn diagonal(&self) -> f64 {
        Vec3::new(
            self.max_width + 2.0 * self.finger_thickness,
            self.height,
            self.finger_length + self.base_depth,
        )
        .norm()
    }

    pub fn model(&self, width: f64) -> GripperModel {
        GripperModel::new(self, width)
    }
}

/// Axis-aligned box in the gripper frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalBox {
    pub center: Vec3,
    pub half: Vec3,
}

impl LocalBox {
    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        (p.x - self.center.x).abs() <= self.half.x
            && (p.y - self.center.y).abs() <= self.half.y
            && (p.z - self.center.z).abs() <= self.half.z
    }

    /// The box placed in the world by a gripper pose.
    pub fn to_world(&self, translation: &Vec3, rotation: &Rotation) -> OrientedBox {
        OrientedBox {
            center: translation + rotation * self.center,
            rotation: *rotation,
            half_extents: self.half,
        }
    }
}

/// Gripper volumes at one opening width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GripperModel {
    pub width: f64,
    /// Left finger, right finger, base.
    pub occupied: [LocalBox; 3],
    pub grasping: LocalBox,
}

impl GripperModel {
    pub fn new(cfg: &GripperConfig, width: f64) -> Self {
        let hw = width / 2.0;
        let hh = cfg.height / 2.0;
        let hl = cfg.finger_length / 2.0;
        let ht = cfg.finger_thickness / 2.0;
        let finger = |sign: f64| LocalBox {
            center: Vec3::new(sign * (hw + ht), 0.0, 0.0),
            half: Vec3::new(ht, hh, hl),
        };
        let base = LocalBox {
            center: Vec3::new(0.0, 0.0, -hl - cfg.base_depth / 2.0),
            half: Vec3::new(hw + cfg.finger_thickness, hh, cfg.base_depth / 2.0),
        };
        Self {
            width,
            occupied: [finger(-1.0), finger(1.0), base],
            grasping: LocalBox {
                center: Vec3::zeros(),
                half: Vec3::new(hw, hh, hl),
            },
        }
    }

    #[inline]
    pub fn collides(&self, local: &Vec3) -> bool {
        self.occupied.iter().any(|b| b.contains(local))
    }

    /// Bounds of all four boxes, in the gripper frame.
    pub fn local_bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for b in self.occupied.iter().chain(std::iter::once(&self.grasping)) {
            lo = lo.inf(&(b.center - b.half));
            hi = hi.sup(&(b.center + b.half));
        }
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_parsing() {
        let g = GripperConfig::parse_csv("0.02, 0.03,0.1,0.01,0.02").unwrap();
        assert_eq!(g, GripperConfig::default());
        assert!(GripperConfig::parse_csv("0.02,0.03,0.1").is_err());
        assert!(GripperConfig::parse_csv("0.02,0.03,0.1,0,0.02").is_err());
        assert!(GripperConfig::parse_csv("a,b,c,d,e").is_err());
    }

    #[test]
    fn boxes_are_symmetric_and_interior_disjoint() {
        let cfg = GripperConfig::default();
        let m = cfg.model(0.05);
        let [l, r, base] = m.occupied;
        assert_eq!(l.center.x, -r.center.x);
        assert_eq!(l.half, r.half);
        assert_eq!(base.center.x, 0.0);
        // Interior points of the grasping space are outside every occupied box.
        let shrink = |b: &LocalBox, p: Vec3| {
            LocalBox {
                center: b.center,
                half: b.half - Vec3::repeat(1e-9),
            }
            .contains(&p)
        };
        for p in [
            Vec3::new(0.0249, 0.0, 0.0),
            Vec3::new(0.0, 0.0099, -0.0149),
            Vec3::new(-0.0249, -0.0099, 0.0149),
        ] {
            assert!(shrink(&m.grasping, p));
            assert!(!m.collides(&p));
        }
        // Just beyond the grasping face lies inside a finger or the base.
        assert!(m.collides(&Vec3::new(0.0251, 0.0, 0.0)));
        assert!(m.collides(&Vec3::new(0.0, 0.0, -0.0151)));
    }

    #[test]
    fn grasping_space_nests_with_width() {
        let cfg = GripperConfig::default();
        let small = cfg.model(0.03).grasping;
        let big = cfg.model(0.07).grasping;
        for c in [-1.0, 1.0] {
            let corner = Vec3::new(c * small.half.x, small.half.y, -small.half.z);
            assert!(big.contains(&corner));
        }
    }
}
