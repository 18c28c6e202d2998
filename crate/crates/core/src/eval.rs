//! Force-closure AP metric over a partial-view point cloud.
//!
//! Predictions are deduplicated with [`gpnms`], the top `k_max` are labeled
//! (collision with the cloud is a failure at every friction coefficient,
//! otherwise the two-contact antipodal test decides), and precision is
//! averaged over `k = 1..=k_max` and over the friction set.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::fas::search::to_local;
use crate::fas::{check_rules, Detection, GraspPose, GripperConfig, SpatialIndex};
use crate::geometry::Vec3;
use crate::nms::{gpnms, NmsConfig};
use crate::par::{map_ordered, Execution};
use crate::{Error, Result};

pub const DEFAULT_K_MAX: usize = 50;
pub const DEFAULT_NORMAL_K: usize = 12;
/// Voxel size of the neighbor index used for normal estimation.
pub const NORMAL_CELL_SIZE: f64 = 0.005;
/// Points this close to the extreme along the closing axis count as
/// candidates for the contact.
pub const CONTACT_BAND: f64 = 0.002;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionSet {
    pub mus: Vec<f64>,
}

impl Default for FrictionSet {
    fn default() -> Self {
        Self {
            mus: vec![0.2, 0.4, 0.6, 0.8, 1.0, 1.2],
        }
    }
}

impl FrictionSet {
    pub fn new(mus: Vec<f64>) -> Result<Self> {
        let set = Self { mus };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mus.is_empty() {
            return Err(Error::invalid("friction set is empty"));
        }
        if self.mus.iter().any(|&m| !(m > 0.0 && m <= 2.0)) {
            return Err(Error::invalid("friction coefficients must lie in (0, 2]"));
        }
        if self.mus.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "friction coefficients must be strictly increasing",
            ));
        }
        Ok(())
    }

    /// Parses a comma-separated list such as `0.2,0.4,0.8`.
    pub fn parse_csv(s: &str) -> Result<Self> {
        let mus = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::invalid(format!("bad friction list {s:?}")))?;
        Self::new(mus)
    }
}

/// Report key for a friction coefficient.
pub fn mu_key(mu: f64) -> String {
    format!("{mu:?}")
}

/// Two contacts with unit normals pointing into the object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPair {
    pub p1: Vec3,
    pub n1: Vec3,
    pub p2: Vec3,
    pub n2: Vec3,
}

/// Reusable nearest-neighbor normal estimation over one cloud.
#[derive(Debug, Clone)]
pub struct NormalEstimator<'a> {
    points: &'a [Vec3],
    index: SpatialIndex,
    k: usize,
}

impl<'a> NormalEstimator<'a> {
    pub fn new(points: &'a [Vec3], k: usize) -> Result<Self> {
        if k < 3 {
            return Err(Error::invalid("normal estimation needs k >= 3"));
        }
        Ok(Self {
            points,
            index: SpatialIndex::build(points, NORMAL_CELL_SIZE)?,
            k,
        })
    }

    /// Normal at `points[i]` from its `k` nearest neighbors (itself
    /// excluded), facing the camera. `None` for rank-deficient neighborhoods.
    pub fn normal_at(&self, i: usize) -> Option<Vec3> {
        let p = self.points[i];
        let mut nbrs = self.index.knn(&p, self.k + 1);
        nbrs.retain(|&j| j != i);
        nbrs.truncate(self.k);
        let mut group: Vec<Vec3> = nbrs.iter().map(|&j| self.points[j]).collect();
        group.push(p);
        let n = pca_normal(&group)?;
        Some(if n.dot(&p) > 0.0 { -n } else { n })
    }
}

/// Least-variance direction of a point set, or `None` if the points span
/// fewer than two dimensions.
pub fn pca_normal(points: &[Vec3]) -> Option<Vec3> {
    if points.len() < 3 {
        return None;
    }
    let mean = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, top) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if top.is_nan() || top <= 0.0 || mid <= 1e-9 * top {
        return None;
    }
    let n: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    Some(n.normalize())
}

/// Per-point normals in cloud order.
pub fn surface_normals(points: &[Vec3], k: usize, exec: Execution) -> Result<Vec<Option<Vec3>>> {
    if points.len() < k + 1 {
        return Err(Error::invalid(format!(
            "normal estimation with k = {k} needs at least {} points",
            k + 1
        )));
    }
    let est = NormalEstimator::new(points, k)?;
    let idx: Vec<usize> = (0..points.len()).collect();
    Ok(map_ordered(&idx, exec, |&i| est.normal_at(i)))
}

/// Contacts of the two jaws: the extreme points of the grasping space along
/// the negative and positive closing axis. Among points within
/// [`CONTACT_BAND`] of an extreme, the one closest to the closing axis with
/// a valid normal is taken. Normals are flipped to point toward the other
/// contact.
pub fn estimate_contacts(
    pose: &GraspPose,
    points: &[Vec3],
    gripper: &GripperConfig,
    mut normal_of: impl FnMut(usize) -> Option<Vec3>,
) -> Option<ContactPair> {
    let model = gripper.model(pose.width);
    let inside: Vec<(usize, Vec3)> = points
        .iter()
        .enumerate()
        .map(|(i, p)| (i, to_local(p, &pose.translation, &pose.rotation)))
        .filter(|(_, l)| model.grasping.contains(l))
        .collect();
    if inside.len() < 2 {
        return None;
    }
    let mut pick = |sign: f64| -> Option<(usize, Vec3)> {
        let extreme = inside
            .iter()
            .map(|(_, l)| sign * l.x)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut band: Vec<&(usize, Vec3)> = inside
            .iter()
            .filter(|(_, l)| sign * l.x >= extreme - CONTACT_BAND)
            .collect();
        band.sort_by(|a, b| {
            let ra = a.1.y * a.1.y + a.1.z * a.1.z;
            let rb = b.1.y * b.1.y + b.1.z * b.1.z;
            ra.total_cmp(&rb).then(a.0.cmp(&b.0))
        });
        band.iter()
            .find_map(|&&(i, _)| normal_of(i).map(|n| (i, n)))
    };
    let (i1, n1) = pick(-1.0)?;
    let (i2, n2) = pick(1.0)?;
    let (p1, p2) = (points[i1], points[i2]);
    if i1 == i2 || p1 == p2 {
        return None;
    }
    let u = p2 - p1;
    Some(ContactPair {
        p1,
        n1: if n1.dot(&u) < 0.0 { -n1 } else { n1 },
        p2,
        n2: if n2.dot(&u) > 0.0 { -n2 } else { n2 },
    })
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Antipodal test: the contact line lies inside both friction cones.
pub fn force_closure(c: &ContactPair, mu: f64) -> bool {
    let d = c.p2 - c.p1;
    let len = d.norm();
    if len.is_nan() || len <= 0.0 {
        return false;
    }
    let u = d / len;
    let half = mu.atan();
    angle_between(&u, &c.n1) <= half && angle_between(&(-u), &c.n2) <= half
}

/// Outcome of labeling one grasp.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspLabel {
    pub collision: bool,
    pub contacts: Option<ContactPair>,
    /// Success per friction coefficient, in friction-set order.
    pub success: Vec<bool>,
}

/// Labels grasps against the scene cloud. `index` must be built over
/// `points`.
pub fn label_grasps(
    grasps: &[GraspPose],
    points: &[Vec3],
    index: &SpatialIndex,
    normals: &NormalEstimator<'_>,
    gripper: &GripperConfig,
    frictions: &FrictionSet,
    exec: Execution,
) -> Vec<GraspLabel> {
    map_ordered(grasps, exec, |pose| {
        let collision = check_rules(index, pose, gripper).collision;
        let contacts = if collision {
            None
        } else {
            estimate_contacts(pose, points, gripper, |i| normals.normal_at(i))
        };
        let success = frictions
            .mus
            .iter()
            .map(|&mu| contacts.is_some_and(|c| force_closure(&c, mu)))
            .collect();
        GraspLabel {
            collision,
            contacts,
            success,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: f64,
    pub ap_per_mu: BTreeMap<String, f64>,
    pub precision_at_k: BTreeMap<String, Vec<f64>>,
}

/// `labels[i][m]` is the success of the `i`-th most confident grasp at
/// `frictions.mus[m]`.
pub fn compute_ap(labels: &[Vec<bool>], frictions: &FrictionSet, k_max: usize) -> Result<ApReport> {
    frictions.validate()?;
    if k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    let m = frictions.mus.len();
    if let Some(bad) = labels.iter().find(|l| l.len() != m) {
        return Err(Error::DimensionMismatch(format!(
            "label row has {} entries for {m} friction coefficients",
            bad.len()
        )));
    }
    let n = labels.len();
    let mut ap_per_mu = BTreeMap::new();
    let mut precision_at_k = BTreeMap::new();
    for (mi, &mu) in frictions.mus.iter().enumerate() {
        let mut hits = 0usize;
        let mut precisions = Vec::with_capacity(k_max);
        for k in 1..=k_max {
            if k <= n && labels[k - 1][mi] {
                hits += 1;
            }
            let denom = k.min(n);
            precisions.push(if denom == 0 {
                0.0
            } else {
                hits as f64 / denom as f64
            });
        }
        ap_per_mu.insert(mu_key(mu), precisions.iter().sum::<f64>() / k_max as f64);
        precision_at_k.insert(mu_key(mu), precisions);
    }
    let ap = ap_per_mu.values().sum::<f64>() / ap_per_mu.len() as f64;
    Ok(ApReport {
        ap,
        ap_per_mu,
        precision_at_k,
    })
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub frictions: FrictionSet,
    pub k_max: usize,
    pub nms: Option<NmsConfig>,
    pub gripper: GripperConfig,
    pub normal_k: usize,
    pub execution: Execution,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            frictions: FrictionSet::default(),
            k_max: DEFAULT_K_MAX,
            nms: Some(NmsConfig::default()),
            gripper: GripperConfig::default(),
            normal_k: DEFAULT_NORMAL_K,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: ApReport,
    /// The grasps that were scored, most confident first.
    pub grasps: Vec<Detection>,
    pub labels: Vec<GraspLabel>,
}

/// NMS, ranking, labeling and AP in one pass.
pub fn evaluate(detections: &[Detection], points: &[Vec3], cfg: &EvalConfig) -> Result<Evaluation> {
    cfg.frictions.validate()?;
    cfg.gripper.validate()?;
    let mut ranked = match &cfg.nms {
        Some(nms) => {
            nms.validate()?;
            gpnms(detections, nms)
        }
        None => {
            let mut v = detections.to_vec();
            v.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
            v
        }
    };
    ranked.truncate(cfg.k_max);
    let index = SpatialIndex::build(points, cfg.gripper.diagonal() / 2.0)?;
    let normals = NormalEstimator::new(points, cfg.normal_k)?;
    let poses: Vec<GraspPose> = ranked.iter().map(|d| d.pose).collect();
    let labels = label_grasps(
        &poses,
        points,
        &index,
        &normals,
        &cfg.gripper,
        &cfg.frictions,
        cfg.execution,
    );
    let rows: Vec<Vec<bool>> = labels.iter().map(|l| l.success.clone()).collect();
    let report = compute_ap(&rows, &cfg.frictions, cfg.k_max)?;
    Ok(Evaluation {
        report,
        grasps: ranked,
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orientation_from;

    fn pair_at_angle(deg: f64) -> ContactPair {
        // Contact line along +x; both normals tilted by `deg` in the xz plane.
        let t = deg.to_radians();
        ContactPair {
            p1: Vec3::new(-0.02, 0.0, 0.5),
            n1: Vec3::new(t.cos(), 0.0, t.sin()),
            p2: Vec3::new(0.02, 0.0, 0.5),
            n2: Vec3::new(-t.cos(), 0.0, t.sin()),
        }
    }

    #[test]
    fn antipodal_cone_thresholds() {
        let aligned = pair_at_angle(0.0);
        for mu in [1e-6, 0.05, 0.2, 1.2] {
            assert!(force_closure(&aligned, mu));
        }
        let off = pair_at_angle(30.0);
        assert!(!force_closure(&off, 0.4));
        assert!(force_closure(&off, 0.8));
        let set = FrictionSet::default();
        let got: Vec<bool> = set.mus.iter().map(|&m| force_closure(&off, m)).collect();
        assert_eq!(got, vec![false, false, true, true, true, true]);
    }

    #[test]
    fn force_closure_is_symmetric() {
        let c = ContactPair {
            p1: Vec3::new(0.0, 0.0, 0.5),
            n1: Vec3::new(0.9, 0.1, 0.3).normalize(),
            p2: Vec3::new(0.03, 0.01, 0.5),
            n2: Vec3::new(-1.0, 0.2, -0.1).normalize(),
        };
        let swapped = ContactPair {
            p1: c.p2,
            n1: c.n2,
            p2: c.p1,
            n2: c.n1,
        };
        for mu in [0.1, 0.3, 0.5, 1.0] {
            assert_eq!(force_closure(&c, mu), force_closure(&swapped, mu));
        }
    }

    #[test]
    fn ap_examples() {
        let f = FrictionSet::new(vec![0.5]).unwrap();
        let r = compute_ap(&[vec![true], vec![false]], &f, 2).unwrap();
        assert_eq!(r.precision_at_k["0.5"], vec![1.0, 0.5]);
        assert_eq!(r.ap_per_mu["0.5"], 0.75);
        assert_eq!(r.ap, 0.75);

        let d = FrictionSet::default();
        let pos = vec![vec![true; 6]; 50];
        assert_eq!(compute_ap(&pos, &d, 50).unwrap().ap, 1.0);
        let neg = vec![vec![false; 6]; 50];
        assert_eq!(compute_ap(&neg, &d, 50).unwrap().ap, 0.0);
        assert_eq!(compute_ap(&[], &d, 50).unwrap().ap, 0.0);
        // Fewer predictions than k: precision over what exists.
        assert_eq!(compute_ap(&[vec![true; 6]], &d, 50).unwrap().ap, 1.0);
        assert!(compute_ap(&[vec![true; 2]], &d, 50).is_err());
    }

    #[test]
    fn report_json_keys() {
        let r = compute_ap(&[vec![true; 6]], &FrictionSet::default(), 3).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert!(v["ap"].is_number());
        assert_eq!(v["ap_per_mu"].as_object().unwrap().len(), 6);
        assert_eq!(v["precision_at_k"]["1.0"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn friction_set_validation() {
        assert!(FrictionSet::new(vec![]).is_err());
        assert!(FrictionSet::new(vec![0.4, 0.2]).is_err());
        assert!(FrictionSet::new(vec![0.0]).is_err());
        assert!(FrictionSet::new(vec![2.5]).is_err());
        assert_eq!(
            FrictionSet::parse_csv("0.2, 0.4").unwrap().mus,
            vec![0.2, 0.4]
        );
    }

    #[test]
    fn plane_normals_face_camera() {
        let mut pts = Vec::new();
        for i in 0..30 {
            for j in 0..30 {
                pts.push(Vec3::new(i as f64 * 0.002, j as f64 * 0.002, 1.0));
            }
        }
        let normals = surface_normals(&pts, 8, Execution::Sequential).unwrap();
        for n in normals {
            let n = n.unwrap();
            assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn sphere_normals_are_radial() {
        let c = Vec3::new(0.0, 0.0, 0.6);
        let r = 0.05;
        let n = 4000;
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        let pts: Vec<Vec3> = (0..n)
            .map(|i| {
                let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = i as f64 * golden;
                c + r * Vec3::new(rho * phi.cos(), rho * phi.sin(), z)
            })
            .collect();
        let normals = surface_normals(&pts, 12, Execution::Parallel).unwrap();
        for (p, n) in pts.iter().zip(&normals) {
            let radial = (p - c).normalize();
            let n = n.unwrap();
            let cos = n.dot(&radial).abs();
            assert!(cos >= 5f64.to_radians().cos(), "{cos}");
        }
    }

    #[test]
    fn collinear_neighborhood_is_invalid() {
        let pts = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(0.001, 0.0, 1.0),
            Vec3::new(0.002, 0.0, 1.0),
        ];
        assert_eq!(pca_normal(&pts), None);
        let est = NormalEstimator::new(&pts, 3).unwrap();
        assert_eq!(est.normal_at(0), None);
        assert!(surface_normals(&pts, 3, Execution::Sequential).is_err());
    }

    #[test]
    fn contacts_on_opposite_faces() {
        let pose = GraspPose {
            translation: Vec3::new(0.0, 0.0, 0.5),
            rotation: orientation_from(&Vec3::z(), 0.0).unwrap(),
            width: 0.05,
        };
        let pts = [Vec3::new(-0.02, 0.0, 0.5), Vec3::new(0.02, 0.001, 0.5)];
        let normals = [Some(Vec3::x()), Some(Vec3::x())];
        let g = GripperConfig::default();
        let c = estimate_contacts(&pose, &pts, &g, |i| normals[i]).unwrap();
        assert_eq!(c.p1, pts[0]);
        assert_eq!(c.p2, pts[1]);
        assert_eq!(c.n1, Vec3::x());
        assert_eq!(c.n2, -Vec3::x());
        assert!(force_closure(&c, 0.2));

        assert!(estimate_contacts(&pose, &[], &g, |_| None).is_none());
        assert!(estimate_contacts(&pose, &pts[..1], &g, |i| normals[i]).is_none());
    }
}
