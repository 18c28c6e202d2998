//! Analytic width and depth search.
//!
//! The heatmap fixes five of the seven grasp degrees of freedom (image cell
//! and orientation class). The remaining two, opening width and depth along
//! the approach axis, are found by sampling a small grid of both and
//! rejecting placements against the back-projected point cloud; see
//! [`search`](search::search).

pub mod gripper;
pub mod index;
pub mod search;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::avh::{extract_candidates, AngleViewHeatmap, ImageGrasp};
use crate::camera::{anchor_unchecked, backproject, DepthImage, GridMap, Intrinsics};
use crate::geometry::{OrientationTable, Rotation, Vec3};
use crate::par::{map_ordered_init, Execution};
use crate::{Error, Result};

pub use gripper::{GripperConfig, GripperModel, LocalBox};
pub use index::{Aabb, BruteForce, OrientedBox, PointQuery, SpatialIndex};
pub use search::{
    check_rules, search, search_oriented, search_per_pose, select_lexicographic, RuleCheck,
    SearchScratch,
};

/// A 7-DoF grasp in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraspPose {
    pub translation: Vec3,
    pub rotation: Rotation,
    pub width: f64,
}

/// Sampling grids for the search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FasConfig {
    /// Candidate opening widths (m), strictly increasing.
    pub widths: Vec<f64>,
    /// Signed shifts of the grasp center along the approach axis (m),
    /// strictly increasing. Positive moves deeper into the scene.
    pub depth_offsets: Vec<f64>,
}

impl Default for FasConfig {
    /// Widths 1..10 cm in 1 cm steps; offsets -2..+2 cm in 1 cm steps.
    fn default() -> Self {
        Self {
            widths: (1..=10).map(|i| i as f64 * 0.01).collect(),
            depth_offsets: (-2..=2).map(|i| i as f64 * 0.01).collect(),
        }
    }
}

impl FasConfig {
    pub fn validate(&self, gripper: &GripperConfig) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.widths.is_empty() || self.depth_offsets.is_empty() {
            return Err(Error::invalid("width and offset grids must be non-empty"));
        }
        if !increasing(&self.widths) || !increasing(&self.depth_offsets) {
            return Err(Error::invalid(
                "width and offset grids must be strictly increasing",
            ));
        }
        if self.depth_offsets.iter().any(|o| !o.is_finite()) {
            return Err(Error::invalid("offsets must be finite"));
        }
        if self.widths[0] <= 0.0 || *self.widths.last().unwrap() > gripper.max_width {
            return Err(Error::invalid(format!(
                "widths must lie in (0, {}]",
                gripper.max_width
            )));
        }
        Ok(())
    }

    /// Gripper models for every sampled width, in order.
    pub fn models(&self, gripper: &GripperConfig) -> Vec<GripperModel> {
        self.widths.iter().map(|&w| gripper.model(w)).collect()
    }
}

/// Everything [`detect`] needs besides its inputs.
#[derive(Debug, Clone)]
pub struct DetectConfig {
    pub fas: FasConfig,
    pub gripper: GripperConfig,
    pub threshold: f32,
    pub top_k: usize,
    /// Voxel size for the spatial index; defaults to half the gripper diagonal.
    pub cell_size: Option<f64>,
    pub execution: Execution,
    /// Skip the index and the shared per-candidate pass: every offset/width
    /// pair is checked by scanning the whole cloud.
    pub brute_force: bool,
}

impl Default for DetectConfig {
    fn default() -> Self {
        Self {
            fas: FasConfig::default(),
            gripper: GripperConfig::default(),
            threshold: crate::avh::DEFAULT_THRESHOLD,
            top_k: crate::avh::DEFAULT_TOP_K,
            cell_size: None,
            execution: Execution::default(),
            brute_force: false,
        }
    }
}

impl DetectConfig {
    pub fn cell_size(&self) -> f64 {
        self.cell_size
            .unwrap_or_else(|| self.gripper.diagonal() / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub pose: GraspPose,
    pub confidence: f32,
}

/// Wall time per stage of [`detect_timed`], in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectTimings {
    pub extract_ms: f64,
    pub backproject_ms: f64,
    pub index_ms: f64,
    pub search_ms: f64,
    pub total_ms: f64,
    pub candidates: usize,
    pub points: usize,
}

/// Heatmap candidates → grid anchors → width/depth search. Candidates
/// without a valid anchor or feasible placement are dropped; the rest keep
/// their heatmap confidence and order.
pub fn detect(
    avh: &AngleViewHeatmap,
    depth: &DepthImage,
    intr: &Intrinsics,
    grid: &GridMap,
    table: &OrientationTable,
    cfg: &DetectConfig,
) -> Result<Vec<Detection>> {
    detect_timed(avh, depth, intr, grid, table, cfg).map(|(d, _)| d)
}

pub fn detect_timed(
    avh: &AngleViewHeatmap,
    depth: &DepthImage,
    intr: &Intrinsics,
    grid: &GridMap,
    table: &OrientationTable,
    cfg: &DetectConfig,
) -> Result<(Vec<Detection>, DetectTimings)> {
    intr.validate()?;
    cfg.gripper.validate()?;
    cfg.fas.validate(&cfg.gripper)?;
    grid.check_matches(intr)?;
    if depth.width() != intr.width || depth.height() != intr.height {
        return Err(Error::DimensionMismatch(format!(
            "depth image is {}x{} but intrinsics describe {}x{}",
            depth.width(),
            depth.height(),
            intr.width,
            intr.height
        )));
    }
    avh.check_compatible(table, grid)?;

    let mut timings = DetectTimings::default();
    let start = Instant::now();
    let candidates = extract_candidates(avh, grid, cfg.threshold, cfg.top_k)?;
    timings.extract_ms = ms_since(start);
    timings.candidates = candidates.len();

    let t = Instant::now();
    let cloud = backproject(depth, intr)?;
    timings.backproject_ms = ms_since(t);
    timings.points = cloud.len();

    let t = Instant::now();
    let index = if cfg.brute_force || candidates.is_empty() {
        None
    } else {
        Some(SpatialIndex::build(&cloud.points, cfg.cell_size())?)
    };
    timings.index_ms = ms_since(t);

    let t = Instant::now();
    let models = cfg.fas.models(&cfg.gripper);
    let brute = BruteForce(&cloud.points);
    let points: &dyn PointQuery = match &index {
        Some(i) => i,
        None => &brute,
    };
    let solved = map_ordered_init(
        &candidates,
        cfg.execution,
        SearchScratch::default,
        |scratch, c| solve_candidate(c, depth, intr, grid, table, cfg, &models, points, scratch),
    );
    let detections: Vec<Detection> = solved.into_iter().flatten().collect();
    timings.search_ms = ms_since(t);
    timings.total_ms = ms_since(start);
    Ok((detections, timings))
}

#[allow(clippy::too_many_arguments)]
fn solve_candidate(
    c: &ImageGrasp,
    depth: &DepthImage,
    intr: &Intrinsics,
    grid: &GridMap,
    table: &OrientationTable,
    cfg: &DetectConfig,
    models: &[GripperModel],
    points: &dyn PointQuery,
    scratch: &mut SearchScratch,
) -> Option<Detection> {
    let anchor = anchor_unchecked(grid, c.row, c.col, depth, intr)?;
    let rotation = table.rotation(c.class)?;
    let pose = if cfg.brute_force {
        search_per_pose(&anchor, rotation, points, &cfg.fas, models)
    } else {
        search_oriented(&anchor, rotation, points, &cfg.fas, models, scratch)
    };
    pose.map(|pose| Detection {
        pose,
        confidence: c.confidence,
    })
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}
