//! Voxel-hash index over a point cloud.
//!
//! Points are bucketed by `floor(p / cell_size)` and stored contiguously per
//! cell, so a range query touches only the cells overlapping the query bound.
//! [`BruteForce`] answers the same queries by scanning the whole cloud and
//! serves as the reference the index is checked against.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rustc_hash::FxHashMap as HashMap;

use crate::geometry::{Rotation, Vec3};
use crate::{Error, Result};

/// Slack added to query bounds so that rounding in the bound computation
/// never drops a point the exact membership test would accept.
const QUERY_PAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }

    pub fn padded(&self, pad: f64) -> Self {
        let d = Vec3::repeat(pad);
        Self {
            min: self.min - d,
            max: self.max + d,
        }
    }
}

/// A box with an arbitrary orientation; membership is boundary inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    pub rotation: Rotation,
    pub half_extents: Vec3,
}

impl OrientedBox {
    pub fn new(center: Vec3, rotation: Rotation, half_extents: Vec3) -> Result<Self> {
        if half_extents.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::invalid("box half extents must be positive"));
        }
        Ok(Self {
            center,
            rotation,
            half_extents,
        })
    }

    #[inline]
    pub fn contains(&self, p: &Vec3) -> bool {
        let local = self.rotation.inverse_transform_vector(&(p - self.center));
        local.x.abs() <= self.half_extents.x
            && local.y.abs() <= self.half_extents.y
            && local.z.abs() <= self.half_extents.z
    }

    /// Axis-aligned bound, padded for conservative queries.
    pub fn aabb(&self) -> Aabb {
        let m = self.rotation.matrix();
        let reach = m.abs() * self.half_extents;
        Aabb {
            min: self.center - reach,
            max: self.center + reach,
        }
        .padded(QUERY_PAD)
    }

    /// The eight corners, in no particular order.
    pub fn corners(&self) -> [Vec3; 8] {
        let h = self.half_extents;
        let mut out = [Vec3::zeros(); 8];
        for (i, c) in out.iter_mut().enumerate() {
            let s = Vec3::new(
                if i & 1 == 0 { -h.x } else { h.x },
                if i & 2 == 0 { -h.y } else { h.y },
                if i & 4 == 0 { -h.z } else { h.z },
            );
            *c = self.center + self.rotation * s;
        }
        out
    }
}

/// Range queries over a point set.
pub trait PointQuery: Sync {
    /// Appends every point inside `bound` (inclusive) to `out`.
    fn gather(&self, bound: &Aabb, out: &mut Vec<Vec3>);

    /// Appends a superset of the points inside `obb`, each at most once.
    /// Callers apply the exact test themselves.
    fn gather_oriented(&self, obb: &OrientedBox, out: &mut Vec<Vec3>) {
        self.gather(&obb.aabb(), out);
    }

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Exhaustive scan; the reference implementation of [`PointQuery`].
#[derive(Debug, Clone, Copy)]
pub struct BruteForce<'a>(pub &'a [Vec3]);

impl PointQuery for BruteForce<'_> {
    fn gather(&self, bound: &Aabb, out: &mut Vec<Vec3>) {
        out.extend(self.0.iter().filter(|p| bound.contains(p)));
    }

    fn len(&self) -> usize {
        self.0.len()
    }
}

type CellKey = [i32; 3];

#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell_size: f64,
    inv_cell: f64,
    /// Points reordered so that each cell's points are contiguous.
    points: Vec<Vec3>,
    /// `source[i]` is the position of `points[i]` in the input cloud.
    source: Vec<u32>,
    cells: HashMap<CellKey, (u32, u32)>,
    key_min: CellKey,
    key_max: CellKey,
}

impl SpatialIndex {
    pub fn build(points: &[Vec3], cell_size: f64) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::invalid("cell size must be positive"));
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::invalid("point cloud too large to index"));
        }
        let inv_cell = 1.0 / cell_size;
        let mut keyed: Vec<(CellKey, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (cell_key(p, inv_cell), i as u32))
            .collect();
        keyed.sort_unstable();

        let mut cells = HashMap::default();
        let mut key_min = [i32::MAX; 3];
        let mut key_max = [i32::MIN; 3];
        let mut start = 0usize;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == key {
                end += 1;
            }
            cells.insert(key, (start as u32, end as u32));
            for a in 0..3 {
                key_min[a] = key_min[a].min(key[a]);
                key_max[a] = key_max[a].max(key[a]);
            }
            start = end;
        }
        Ok(Self {
            cell_size,
            inv_cell,
            points: keyed.iter().map(|&(_, i)| points[i as usize]).collect(),
            source: keyed.iter().map(|&(_, i)| i).collect(),
            cells,
            key_min,
            key_max,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    fn key_range(&self, bound: &Aabb) -> Option<(CellKey, CellKey)> {
        if self.cells.is_empty() {
            return None;
        }
        let lo = cell_key(&bound.min, self.inv_cell);
        let hi = cell_key(&bound.max, self.inv_cell);
        let mut out_lo = [0; 3];
        let mut out_hi = [0; 3];
        for a in 0..3 {
            out_lo[a] = lo[a].max(self.key_min[a]);
            out_hi[a] = hi[a].min(self.key_max[a]);
            if out_lo[a] > out_hi[a] {
                return None;
            }
        }
        Some((out_lo, out_hi))
    }

    #[inline]
    fn cell_points(&self, key: &CellKey) -> &[Vec3] {
        match self.cells.get(key) {
            Some(&(s, e)) => &self.points[s as usize..e as usize],
            None => &[],
        }
    }

    /// Every point inside the oriented box (boundary inclusive).
    pub fn points_in_box(&self, obb: &OrientedBox) -> Vec<Vec3> {
        let mut candidates = Vec::new();
        self.gather(&obb.aabb(), &mut candidates);
        candidates.retain(|p| obb.contains(p));
        candidates
    }

    /// Indices (into the cloud the index was built from) of the `k` nearest
    /// points to `query`, closest first. Equal distances are ordered by index.
    pub fn knn(&self, query: &Vec3, k: usize) -> Vec<usize> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let center = cell_key(query, self.inv_cell);
        let max_ring = (0..3)
            .map(|a| {
                (center[a] as i64 - self.key_min[a] as i64)
                    .abs()
                    .max((self.key_max[a] as i64 - center[a] as i64).abs())
            })
            .max()
            .unwrap_or(0);
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        let mut ring: i64 = 0;
        loop {
            for_each_shell_key(center, ring, |key| {
                if let Some(&(s, e)) = self.cells.get(&key) {
                    for i in s as usize..e as usize {
                        let n = Neighbor {
                            dist2: (self.points[i] - query).norm_squared(),
                            index: self.source[i],
                        };
                        if heap.len() < k {
                            heap.push(n);
                        } else if n < *heap.peek().unwrap() {
                            heap.pop();
                            heap.push(n);
                        }
                    }
                }
            });
            // Anything outside the visited block is at least `ring` cells away.
            let covered = ring as f64 * self.cell_size;
            let done = heap.len() == k && heap.peek().unwrap().dist2 <= covered * covered;
            if done || ring >= max_ring {
                break;
            }
            ring += 1;
        }
        let mut out = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|n| n.index as usize).collect()
    }
}

impl PointQuery for SpatialIndex {
    fn gather(&self, bound: &Aabb, out: &mut Vec<Vec3>) {
        let Some((lo, hi)) = self.key_range(bound) else {
            return;
        };
        let span = (0..3)
            .map(|a| (hi[a] - lo[a] + 1) as usize)
            .product::<usize>();
        if span > self.cells.len() {
            for (key, &(s, e)) in &self.cells {
                if (0..3).all(|a| key[a] >= lo[a] && key[a] <= hi[a]) {
                    out.extend(
                        self.points[s as usize..e as usize]
                            .iter()
                            .filter(|p| bound.contains(p)),
                    );
                }
            }
            return;
        }
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    let pts = self.cell_points(&[x, y, z]);
                    out.extend(pts.iter().filter(|p| bound.contains(p)));
                }
            }
        }
    }

    fn gather_oriented(&self, obb: &OrientedBox, out: &mut Vec<Vec3>) {
        let bound = obb.aabb();
        let Some((lo, hi)) = self.key_range(&bound) else {
            return;
        };
        let span = (0..3)
            .map(|a| (hi[a] - lo[a] + 1) as usize)
            .product::<usize>();
        if span > self.cells.len() {
            self.gather(&bound, out);
            return;
        }
        // A cell can only hold points of the box if its center lies within
        // the box grown by the cell's half diagonal.
        let reach = obb
            .half_extents
            .add_scalar(self.cell_size * 0.5 * 3f64.sqrt() + QUERY_PAD);
        let m = obb.rotation.matrix().transpose();
        let (sx, sy, sz) = (
            m.column(0) * self.cell_size,
            m.column(1) * self.cell_size,
            m.column(2) * self.cell_size,
        );
        let origin = Vec3::new(
            (lo[0] as f64 + 0.5) * self.cell_size,
            (lo[1] as f64 + 0.5) * self.cell_size,
            (lo[2] as f64 + 0.5) * self.cell_size,
        );
        let base = m * (origin - obb.center);
        for (i, x) in (lo[0]..=hi[0]).enumerate() {
            let bx = base + sx * i as f64;
            for (j, y) in (lo[1]..=hi[1]).enumerate() {
                let by = bx + sy * j as f64;
                for (k, z) in (lo[2]..=hi[2]).enumerate() {
                    let c = by + sz * k as f64;
                    if c.x.abs() > reach.x || c.y.abs() > reach.y || c.z.abs() > reach.z {
                        continue;
                    }
                    let pts = self.cell_points(&[x, y, z]);
                    out.extend(pts.iter().filter(|p| bound.contains(p)));
                }
            }
        }
    }

    fn len(&self) -> usize {
        self.points.len()
    }
}

#[inline]
fn cell_key(p: &Vec3, inv_cell: f64) -> CellKey {
    let q = |v: f64| {
        (v * inv_cell)
            .floor()
            .clamp(i32::MIN as f64, i32::MAX as f64) as i32
    };
    [q(p.x), q(p.y), q(p.z)]
}

fn for_each_shell_key(center: CellKey, ring: i64, mut f: impl FnMut(CellKey)) {
    let c = center.map(|v| v as i64);
    let clamp = |v: i64| v.clamp(i32::MIN as i64, i32::MAX as i64) as i32;
    for dx in -ring..=ring {
        for dy in -ring..=ring {
            let on_face = dx.abs() == ring || dy.abs() == ring;
            if on_face {
                for dz in -ring..=ring {
                    f([clamp(c[0] + dx), clamp(c[1] + dy), clamp(c[2] + dz)]);
                }
            } else {
                f([clamp(c[0] + dx), clamp(c[1] + dy), clamp(c[2] - ring)]);
                if ring > 0 {
                    f([clamp(c[0] + dx), clamp(c[1] + dy), clamp(c[2] + ring)]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Neighbor {
    dist2: f64,
    index: u32,
}

impl PartialEq for Neighbor {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.index.cmp(&other.index))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-0.3..0.3),
                    rng.random_range(-0.2..0.2),
                    rng.random_range(0.3..0.7),
                )
            })
            .collect()
    }

    fn random_box(rng: &mut ChaCha8Rng) -> OrientedBox {
        let axis = nalgebra::Unit::new_normalize(Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ));
        OrientedBox::new(
            Vec3::new(
                rng.random_range(-0.3..0.3),
                rng.random_range(-0.2..0.2),
                rng.random_range(0.3..0.7),
            ),
            Rotation::from_axis_angle(&axis, rng.random_range(0.0..3.0)),
            Vec3::new(
                rng.random_range(0.005..0.1),
                rng.random_range(0.005..0.1),
                rng.random_range(0.005..0.1),
            ),
        )
        .unwrap()
    }

    #[test]
    fn empty_cloud_queries_are_empty() {
        let idx = SpatialIndex::build(&[], 0.05).unwrap();
        let b = OrientedBox::new(Vec3::zeros(), Rotation::identity(), Vec3::repeat(10.0)).unwrap();
        assert!(idx.points_in_box(&b).is_empty());
        assert!(idx.knn(&Vec3::zeros(), 3).is_empty());
    }

    #[test]
    fn single_point() {
        let p = Vec3::new(0.1, -0.2, 0.5);
        let idx = SpatialIndex::build(&[p], 0.05).unwrap();
        for half in [1e-3, 0.04, 0.5, 3.0] {
            let b = OrientedBox::new(p, Rotation::identity(), Vec3::repeat(half)).unwrap();
            assert_eq!(idx.points_in_box(&b), vec![p]);
        }
    }

    #[test]
    fn bad_cell_size_rejected() {
        assert!(SpatialIndex::build(&[], 0.0).is_err());
        assert!(SpatialIndex::build(&[], f64::NAN).is_err());
    }

    #[test]
    fn boundary_membership() {
        let b = OrientedBox::new(Vec3::zeros(), Rotation::identity(), Vec3::repeat(1.0)).unwrap();
        assert!(b.contains(&Vec3::zeros()));
        assert!(b.contains(&Vec3::new(1.0, 0.0, 0.0)));
        assert!(b.contains(&Vec3::new(1.0, -1.0, 1.0)));
        assert!(!b.contains(&Vec3::new(1.0000001, 0.0, 0.0)));
        let idx = SpatialIndex::build(
            &[Vec3::new(1.0, 0.0, 0.0), Vec3::new(1.0000001, 0.0, 0.0)],
            0.3,
        )
        .unwrap();
        assert_eq!(idx.points_in_box(&b), vec![Vec3::new(1.0, 0.0, 0.0)]);
    }

    #[test]
    fn boxes_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cloud = random_cloud(&mut rng, 10_000);
        let idx = SpatialIndex::build(&cloud, 0.04).unwrap();
        for _ in 0..100 {
            let b = random_box(&mut rng);
            let mut fast = idx.points_in_box(&b);
            let mut slow: Vec<Vec3> = cloud.iter().copied().filter(|p| b.contains(p)).collect();
            let key = |p: &Vec3| (p.x.to_bits(), p.y.to_bits(), p.z.to_bits());
            fast.sort_by_key(key);
            slow.sort_by_key(key);
            assert_eq!(fast, slow);
        }
    }

    #[test]
    fn gather_matches_brute_force_for_huge_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let cloud = random_cloud(&mut rng, 2000);
        let idx = SpatialIndex::build(&cloud, 0.01).unwrap();
        let bound = Aabb {
            min: Vec3::repeat(-5.0),
            max: Vec3::repeat(5.0),
        };
        let mut a = Vec::new();
        idx.gather(&bound, &mut a);
        assert_eq!(a.len(), cloud.len());
    }

    #[test]
    fn knn_matches_sorting() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cloud = random_cloud(&mut rng, 3000);
        let idx = SpatialIndex::build(&cloud, 0.02).unwrap();
        for _ in 0..50 {
            let q = cloud[rng.random_range(0..cloud.len())] + Vec3::new(0.003, -0.002, 0.001);
            let k = rng.random_range(1..20);
            let mut order: Vec<usize> = (0..cloud.len()).collect();
            order.sort_by(|&a, &b| {
                (cloud[a] - q)
                    .norm_squared()
                    .total_cmp(&(cloud[b] - q).norm_squared())
                    .then(a.cmp(&b))
            });
            assert_eq!(idx.knn(&q, k), order[..k].to_vec());
        }
        // k larger than the cloud returns everything.
        assert_eq!(idx.knn(&Vec3::zeros(), 5000).len(), 3000);
    }
}
