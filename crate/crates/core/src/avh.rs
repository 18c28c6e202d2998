//! Angle-view heatmaps: ground-truth labelling, candidate extraction, the
//! random baseline and the `AVH1` exchange format.
//!
//! Tensor layout is `(class, row, col)`, class-major then row-major, where
//! `class = view_idx * num_angles + angle_idx`.
//!
//! `AVH1` file layout (all little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `b"AVH1"` |
//! | 16    | `u32` views, angles, grid_h, grid_w |
//! | 4·N   | `f32` confidences, N = views·angles·grid_h·grid_w |

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{GridMap, Intrinsics};
use crate::geometry::{OrientationTable, Rotation, Vec3};
use crate::{Error, Result};

pub const AVH_MAGIC: &[u8; 4] = b"AVH1";
pub const DEFAULT_THRESHOLD: f32 = 0.3;
pub const DEFAULT_TOP_K: usize = 1024;

/// Heatmap dimensions: orientation classes and spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvhDims {
    pub num_views: usize,
    pub num_angles: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl AvhDims {
    pub fn new(table: &OrientationTable, grid: &GridMap) -> Self {
        Self {
            num_views: table.num_views(),
            num_angles: table.num_angles(),
            grid_h: grid.grid_h,
            grid_w: grid.grid_w,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_views * self.num_angles
    }

    pub fn cells(&self) -> usize {
        self.grid_h * self.grid_w
    }

    /// Total bin count, or `None` on overflow.
    pub fn bin_count(&self) -> Option<usize> {
        self.num_views
            .checked_mul(self.num_angles)?
            .checked_mul(self.grid_h)?
            .checked_mul(self.grid_w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AngleViewHeatmap {
    dims: AvhDims,
    data: Vec<f32>,
}

impl AngleViewHeatmap {
    pub fn zeros(dims: AvhDims) -> Result<Self> {
        let n = dims
            .bin_count()
            .ok_or_else(|| Error::invalid("heatmap dimensions overflow"))?;
        Ok(Self {
            dims,
            data: vec![0.0; n],
        })
    }

    pub fn from_data(dims: AvhDims, data: Vec<f32>) -> Result<Self> {
        if dims.bin_count() != Some(data.len()) {
            return Err(Error::invalid(format!(
                "{} values do not fill a {:?} heatmap",
                data.len(),
                dims
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "value {} at {i} outside [0, 1]",
                data[i]
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> AvhDims {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn index(&self, class: usize, row: usize, col: usize) -> usize {
        (class * self.dims.grid_h + row) * self.dims.grid_w + col
    }

    pub fn get(&self, class: usize, row: usize, col: usize) -> f32 {
        self.data[self.index(class, row, col)]
    }

    /// Sets a bin, clamping to `[0, 1]`.
    pub fn set(&mut self, class: usize, row: usize, col: usize, value: f32) {
        let i = self.index(class, row, col);
        self.data[i] = value.clamp(0.0, 1.0);
    }

    /// `(class, row, col)` for a flat index.
    pub fn unravel(&self, flat: usize) -> (usize, usize, usize) {
        let cells = self.dims.cells();
        let class = flat / cells;
        let rem = flat % cells;
        (class, rem / self.dims.grid_w, rem % self.dims.grid_w)
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }

    /// Checks that the heatmap matches an orientation table and grid.
    pub fn check_compatible(&self, table: &OrientationTable, grid: &GridMap) -> Result<()> {
        let expected = AvhDims::new(table, grid);
        if self.dims != expected {
            return Err(Error::DimensionMismatch(format!(
                "heatmap {:?} does not match expected {:?}",
                self.dims, expected
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + 4 * self.data.len());
        out.extend_from_slice(AVH_MAGIC);
        for d in [
            self.dims.num_views,
            self.dims.num_angles,
            self.dims.grid_h,
            self.dims.grid_w,
        ] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != AVH_MAGIC {
            return Err(Error::format(0, "bad magic, expected AVH1"));
        }
        if bytes.len() < 20 {
            return Err(Error::format(bytes.len() as u64, "truncated header"));
        }
        let field = |i: usize| {
            let o = 4 + 4 * i;
            u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]]) as usize
        };
        let dims = AvhDims {
            num_views: field(0),
            num_angles: field(1),
            grid_h: field(2),
            grid_w: field(3),
        };
        let n = dims
            .bin_count()
            .and_then(|n| n.checked_mul(4).map(|b| (n, b)))
            .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
        let (count, payload_bytes) = n;
        let payload = &bytes[20..];
        if payload.len() != payload_bytes {
            return Err(Error::format(
                bytes.len() as u64,
                format!(
                    "payload is {} bytes, header declares {payload_bytes}",
                    payload.len()
                ),
            ));
        }
        let mut data = Vec::with_capacity(count);
        for (i, c) in payload.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::format(
                    20 + 4 * i as u64,
                    format!("confidence {v} outside [0, 1]"),
                ));
            }
            data.push(v);
        }
        Ok(Self { dims, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }
}

/// A dense grasp label in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GraspAnnotation {
    pub translation: Vec3,
    pub rotation: Rotation,
    pub width: f64,
}

/// An image-space grasp hypothesis read off a heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrasp {
    pub u: usize,
    pub v: usize,
    pub row: usize,
    pub col: usize,
    pub class: usize,
    pub confidence: f32,
}

/// Binary ground-truth heatmap: every annotation marks its nearest
/// `(class, cell)` bin with 1.0. Annotations behind the camera or outside
/// the image are skipped.
pub fn ground_truth_avh(
    annotations: &[GraspAnnotation],
    intr: &Intrinsics,
    table: &OrientationTable,
    grid: &GridMap,
) -> Result<AngleViewHeatmap> {
    grid.check_matches(intr)?;
    let mut avh = AngleViewHeatmap::zeros(AvhDims::new(table, grid))?;
    for a in annotations {
        if let Some((class, row, col)) = positive_bin(a, intr, table, grid) {
            avh.set(class, row, col, 1.0);
        }
    }
    Ok(avh)
}

/// The `(class, row, col)` bin an annotation labels, if it is in frame.
pub fn positive_bin(
    a: &GraspAnnotation,
    intr: &Intrinsics,
    table: &OrientationTable,
    grid: &GridMap,
) -> Option<(usize, usize, usize)> {
    let (u, v) = intr.project(&a.translation)?;
    if !(u >= 0.0 && v >= 0.0 && u < intr.width as f64 && v < intr.height as f64) {
        return None;
    }
    let (row, col) = grid.cell_of_pixel(u as usize, v as usize)?;
    Some((table.nearest_class_index(&a.rotation), row, col))
}

/// Bins with confidence `>= threshold`, highest first, at most `top_k`.
/// Equal confidences are ordered by `(row, col, class)`.
pub fn extract_candidates(
    avh: &AngleViewHeatmap,
    grid: &GridMap,
    threshold: f32,
    top_k: usize,
) -> Result<Vec<ImageGrasp>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::invalid("threshold must lie in [0, 1]"));
    }
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    if avh.dims.grid_h != grid.grid_h || avh.dims.grid_w != grid.grid_w {
        return Err(Error::DimensionMismatch(format!(
            "heatmap grid {}x{} does not match {}x{}",
            avh.dims.grid_h, avh.dims.grid_w, grid.grid_h, grid.grid_w
        )));
    }

    // Sort key (confidence desc, row, col, class) packed for cheap comparison.
    let mut hits: Vec<(f32, usize, usize, usize)> = avh
        .data
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= threshold)
        .map(|(i, &c)| {
            let (class, row, col) = avh.unravel(i);
            (c, row, col, class)
        })
        .collect();
    let order = |a: &(f32, usize, usize, usize), b: &(f32, usize, usize, usize)| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
            .then(a.3.cmp(&b.3))
    };
    if hits.len() > top_k {
        hits.select_nth_unstable_by(top_k - 1, order);
        hits.truncate(top_k);
    }
    hits.sort_unstable_by(order);
    Ok(hits
        .into_iter()
        .map(|(confidence, row, col, class)| {
            let (u, v) = grid.cell_center(row, col);
            ImageGrasp {
                u,
                v,
                row,
                col,
                class,
                confidence,
            }
        })
        .collect())
}

/// Random-candidate baseline: each bin is independently non-zero with
/// probability `density`, with confidence uniform in `(0, 1]`.
pub fn random_avh(dims: AvhDims, seed: u64, density: f64) -> Result<AngleViewHeatmap> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid("density must lie in (0, 1]"));
    }
    let mut avh = AngleViewHeatmap::zeros(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in avh.data.iter_mut() {
        if rng.random::<f64>() < density {
            *v = 1.0 - rng.random::<f32>();
        }
    }
    Ok(avh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::orientation_from;

    fn setup() -> (Intrinsics, OrientationTable, GridMap) {
        let intr = Intrinsics::default();
        let grid = GridMap::for_intrinsics(4, &intr).unwrap();
        (intr, OrientationTable::default(), grid)
    }

    fn annotation(table: &OrientationTable, class: usize, p: Vec3) -> GraspAnnotation {
        GraspAnnotation {
            translation: p,
            rotation: *table.rotation(class).unwrap(),
            width: 0.05,
        }
    }

    #[test]
    fn empty_annotations_give_zero_heatmap() {
        let (intr, table, grid) = setup();
        let avh = ground_truth_avh(&[], &intr, &table, &grid).unwrap();
        assert_eq!(avh.count_nonzero(), 0);
        assert_eq!(avh.data().len(), 360 * 72 * 96);
    }

    #[test]
    fn one_annotation_sets_one_bin() {
        let (intr, table, grid) = setup();
        let a = annotation(&table, 100, Vec3::new(0.01, -0.02, 0.5));
        let avh = ground_truth_avh(&[a.clone(), a.clone()], &intr, &table, &grid).unwrap();
        assert_eq!(avh.count_nonzero(), 1);
        let (u, v) = intr.project(&a.translation).unwrap();
        let (row, col) = grid.cell_of_pixel(u as usize, v as usize).unwrap();
        assert_eq!(avh.get(100, row, col), 1.0);
    }

    #[test]
    fn out_of_frame_annotations_skipped() {
        let (intr, table, grid) = setup();
        let behind = annotation(&table, 0, Vec3::new(0.0, 0.0, -0.5));
        let aside = annotation(&table, 0, Vec3::new(5.0, 0.0, 0.5));
        let avh = ground_truth_avh(&[behind, aside], &intr, &table, &grid).unwrap();
        assert_eq!(avh.count_nonzero(), 0);
    }

    #[test]
    fn labelling_is_order_independent() {
        let (intr, table, grid) = setup();
        let anns: Vec<_> = (0..20)
            .map(|i| {
                let r = orientation_from(&table.views()[i % 60], 0.1 * i as f64).unwrap();
                GraspAnnotation {
                    translation: Vec3::new(0.01 * i as f64 - 0.1, 0.005 * i as f64, 0.6),
                    rotation: r,
                    width: 0.04,
                }
            })
            .collect();
        let mut rev = anns.clone();
        rev.reverse();
        let a = ground_truth_avh(&anns, &intr, &table, &grid).unwrap();
        let b = ground_truth_avh(&rev, &intr, &table, &grid).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn candidates_sorted_and_truncated() {
        let (_, table, grid) = setup();
        let mut avh = AngleViewHeatmap::zeros(AvhDims::new(&table, &grid)).unwrap();
        assert!(extract_candidates(&avh, &grid, 0.5, 10).unwrap().is_empty());
        avh.set(3, 10, 11, 0.9);
        avh.set(7, 0, 0, 0.6);
        avh.set(200, 71, 95, 0.95);
        avh.set(5, 5, 5, 0.2);
        let c = extract_candidates(&avh, &grid, 0.5, 2).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].class, c[0].row, c[0].col), (200, 71, 95));
        assert_eq!((c[1].class, c[1].row, c[1].col), (3, 10, 11));
        assert_eq!((c[1].u, c[1].v), (11 * 4 + 2, 10 * 4 + 2));
    }

    #[test]
    fn uniform_heatmap_uses_lexicographic_ties() {
        let table = OrientationTable::new(2, 2).unwrap();
        let grid = GridMap::new(4, 12, 8).unwrap();
        let dims = AvhDims::new(&table, &grid);
        let n = dims.bin_count().unwrap();
        let avh = AngleViewHeatmap::from_data(dims, vec![0.7; n]).unwrap();
        let c = extract_candidates(&avh, &grid, 0.5, 5).unwrap();
        let keys: Vec<_> = c.iter().map(|g| (g.row, g.col, g.class)).collect();
        assert_eq!(
            keys,
            vec![(0, 0, 0), (0, 0, 1), (0, 0, 2), (0, 0, 3), (0, 1, 0)]
        );
    }

    #[test]
    fn random_heatmap_is_seeded() {
        let (_, table, grid) = setup();
        let dims = AvhDims::new(&table, &grid);
        let a = random_avh(dims, 42, 0.01).unwrap();
        assert_eq!(a, random_avh(dims, 42, 0.01).unwrap());
        assert_ne!(a, random_avh(dims, 43, 0.01).unwrap());
        // Binomial(2_488_320, 0.01): mean 24883.2, sd ~156.96.
        let n = a.count_nonzero() as f64;
        assert!((n - 24_883.2).abs() < 3.0 * 156.96, "{n}");
        assert!(random_avh(dims, 1, 0.0).is_err());
        let small = AvhDims {
            num_views: 2,
            num_angles: 2,
            grid_h: 3,
            grid_w: 3,
        };
        assert_eq!(random_avh(small, 5, 1.0).unwrap().count_nonzero(), 36);
    }

    #[test]
    fn file_format() {
        let (_, table, grid) = setup();
        let dims = AvhDims::new(&table, &grid);
        let avh = random_avh(dims, 9, 0.001).unwrap();
        let bytes = avh.encode();
        assert_eq!(&bytes[..4], b"AVH1");
        assert_eq!(bytes.len(), 20 + 4 * 360 * 72 * 96);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 60);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 96);
        assert_eq!(AngleViewHeatmap::decode(&bytes).unwrap(), avh);

        let mut bad = bytes.clone();
        bad[3] = b'2';
        assert!(matches!(
            AngleViewHeatmap::decode(&bad),
            Err(Error::Format { offset: 0, .. })
        ));
        assert!(matches!(
            AngleViewHeatmap::decode(&bytes[..bytes.len() - 1]),
            Err(Error::Format { .. })
        ));
        let mut huge = bytes[..20].to_vec();
        huge[4..20].copy_from_slice(&[0xff; 16]);
        assert!(matches!(
            AngleViewHeatmap::decode(&huge),
            Err(Error::Format { .. })
        ));
    }
}
