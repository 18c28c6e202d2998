//! The two filtering rules and the width/depth search built on them.
//!
//! A placement is rejected if any point lies in the gripper's occupied
//! volume (collision) or if no point lies in its grasping space (empty).
//! The search walks depth offsets from deepest to shallowest and widths from
//! narrowest to widest, returning the first placement that survives both
//! rules: the deepest feasible offset, then the narrowest width at it.

use crate::avh::ImageGrasp;
use crate::fas::gripper::{GripperConfig, GripperModel, LocalBox};
use crate::fas::index::{Aabb, OrientedBox, PointQuery};
use crate::fas::{FasConfig, GraspPose};
use crate::geometry::{approach_axis, OrientationTable, Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleCheck {
    /// Some point is inside a finger or the base.
    pub collision: bool,
    /// No point is inside the grasping space.
    pub empty: bool,
}

impl RuleCheck {
    pub fn feasible(&self) -> bool {
        !self.collision && !self.empty
    }
}

/// Gripper-frame coordinates of a world point.
#[inline]
pub fn to_local(p: &Vec3, translation: &Vec3, rotation: &Rotation) -> Vec3 {
    rotation.inverse_transform_vector(&(p - translation))
}

fn world_bound(translation: &Vec3, rotation: &Rotation, lo: Vec3, hi: Vec3) -> Aabb {
    LocalBox {
        center: (lo + hi) * 0.5,
        half: (hi - lo) * 0.5,
    }
    .to_world(translation, rotation)
    .aabb()
}

#[inline]
fn classify<'a>(locals: impl IntoIterator<Item = &'a Vec3>, model: &GripperModel) -> RuleCheck {
    let mut collision = false;
    let mut empty = true;
    for l in locals {
        if !collision && model.collides(l) {
            collision = true;
        }
        if empty && model.grasping.contains(l) {
            empty = false;
        }
        if collision && !empty {
            break;
        }
    }
    RuleCheck { collision, empty }
}

/// Evaluates both rules for one pose against any point source.
pub fn check_rules<Q: PointQuery + ?Sized>(
    points: &Q,
    pose: &GraspPose,
    gripper: &GripperConfig,
) -> RuleCheck {
    check_model(
        points,
        &pose.translation,
        &pose.rotation,
        &gripper.model(pose.width),
    )
}

fn check_model<Q: PointQuery + ?Sized>(
    points: &Q,
    translation: &Vec3,
    rotation: &Rotation,
    model: &GripperModel,
) -> RuleCheck {
    let (lo, hi) = model.local_bounds();
    let mut near = Vec::new();
    points.gather(&world_bound(translation, rotation, lo, hi), &mut near);
    let locals: Vec<Vec3> = near
        .iter()
        .map(|p| to_local(p, translation, rotation))
        .collect();
    classify(&locals, model)
}

/// The search as a plain walk over offset/width pairs, one [`check_rules`]
/// query per pair. Same result as [`search_oriented`]; kept as a reference.
pub fn search_per_pose<Q: PointQuery + ?Sized>(
    anchor: &Vec3,
    rotation: &Rotation,
    points: &Q,
    fas: &FasConfig,
    models: &[GripperModel],
) -> Option<GraspPose> {
    let approach = approach_axis(rotation);
    let offsets = &fas.depth_offsets;
    let (oi, wi) = select_lexicographic(offsets.len(), models.len(), |oi, wi| {
        let center = anchor + approach * offsets[oi];
        check_model(points, &center, rotation, &models[wi]).feasible()
    })?;
    Some(GraspPose {
        translation: anchor + approach * offsets[oi],
        rotation: *rotation,
        width: fas.widths[wi],
    })
}

/// Lexicographic choice over a grid of `num_offsets × num_widths` pairs:
/// the largest offset index with any feasible width, then the smallest
/// feasible width index there. `feasible` is called in that search order
/// and never after the first hit.
pub fn select_lexicographic(
    num_offsets: usize,
    num_widths: usize,
    mut feasible: impl FnMut(usize, usize) -> bool,
) -> Option<(usize, usize)> {
    (0..num_offsets).rev().find_map(|oi| {
        (0..num_widths)
            .find(|&wi| feasible(oi, wi))
            .map(|wi| (oi, wi))
    })
}

/// Reusable buffers for [`search_oriented`].
#[derive(Debug, Default)]
pub struct SearchScratch {
    near: Vec<Vec3>,
    /// World point and its coordinates in the anchor-centered frame.
    kept: Vec<(Vec3, Vec3)>,
    locals: Vec<Vec3>,
}

/// Solves width and depth for a candidate read off the heatmap.
pub fn search<Q: PointQuery + ?Sized>(
    candidate: &ImageGrasp,
    anchor: &Vec3,
    points: &Q,
    table: &OrientationTable,
    fas: &FasConfig,
    gripper: &GripperConfig,
) -> Option<GraspPose> {
    let rotation = table.rotation(candidate.class)?;
    let models = fas.models(gripper);
    search_oriented(
        anchor,
        rotation,
        points,
        fas,
        &models,
        &mut SearchScratch::default(),
    )
}

/// Margin separating the screening pass from the exact test. Screening uses
/// coordinates that differ from the exact transform by rounding only, so a
/// decision taken with this much room is the exact decision.
const SCREEN_TOL: f64 = 1e-9;

/// Shared extents of a set of models built by [`GripperModel::new`].
struct Layout {
    /// Loose (largest) and strict (smallest) half extents over the models.
    loose_hy: f64,
    loose_hz: f64,
    strict_hy: f64,
    strict_finger_hz: f64,
    base_cz: f64,
    strict_base_hz: f64,
}

impl Layout {
    fn new(models: &[GripperModel]) -> Self {
        let mut l = Layout {
            loose_hy: 0.0,
            loose_hz: 0.0,
            strict_hy: f64::INFINITY,
            strict_finger_hz: f64::INFINITY,
            base_cz: models[0].occupied[2].center.z,
            strict_base_hz: f64::INFINITY,
        };
        for m in models {
            let [f, _, b] = &m.occupied;
            let g = &m.grasping;
            debug_assert!(b.center.z == l.base_cz && f.center.z == 0.0);
            l.loose_hy = l.loose_hy.max(g.half.y).max(f.half.y).max(b.half.y);
            l.loose_hz = l.loose_hz.max(g.half.z);
            l.strict_hy = l.strict_hy.min(f.half.y).min(b.half.y);
            l.strict_finger_hz = l.strict_finger_hz.min(f.half.z);
            l.strict_base_hz = l.strict_base_hz.min(b.half.z);
        }
        l
    }
}

/// Width and depth search at a fixed orientation. `models[i]` must be the
/// gripper model for `fas.widths[i]`, as built by [`FasConfig::models`].
///
/// All points are transformed once into the anchor frame and every
/// offset/width pair is screened from those coordinates. Pairs the screen
/// cannot rule out are confirmed with the exact per-pose transform, so the
/// result is the one [`check_rules`] enumeration would give.
pub fn search_oriented<Q: PointQuery + ?Sized>(
    anchor: &Vec3,
    rotation: &Rotation,
    points: &Q,
    fas: &FasConfig,
    models: &[GripperModel],
    scratch: &mut SearchScratch,
) -> Option<GraspPose> {
    let (offsets, widths) = (&fas.depth_offsets, &fas.widths);
    let (no, nw) = (offsets.len(), models.len());
    if no == 0 || nw == 0 || no > MAX_OFFSETS || nw > 64 {
        return search_exact(anchor, rotation, points, fas, models, scratch);
    }
    let approach = approach_axis(rotation);
    let (lo, hi) = union_bounds(offsets, models);

    scratch.near.clear();
    points.gather_oriented(&world_box(anchor, rotation, lo, hi), &mut scratch.near);
    // The pad absorbs the rounding difference to the exact per-offset
    // transform.
    const PAD: f64 = 1e-6;
    scratch.kept.clear();
    let inv = rotation.matrix().transpose();
    scratch.kept.extend(scratch.near.iter().filter_map(|p| {
        let l = inv * (p - anchor);
        let inside = l.x >= lo.x - PAD
            && l.x <= hi.x + PAD
            && l.y >= lo.y - PAD
            && l.y <= hi.y + PAD
            && l.z >= lo.z - PAD
            && l.z <= hi.z + PAD;
        inside.then_some((*p, l))
    }));
    if scratch.kept.is_empty() {
        return None;
    }

    // Screening. Per offset: nearest |x| that may be in the grasping space,
    // nearest |x| surely in the base, and widths whose fingers surely hit.
    let lay = Layout::new(models);
    // Finger x extents per width; both edges increase with width.
    let mut inner = [0.0; 64];
    let mut outer = [0.0; 64];
    for (wi, m) in models.iter().enumerate() {
        let f = &m.occupied[1];
        inner[wi] = f.center.x - f.half.x + SCREEN_TOL;
        outer[wi] = f.center.x + f.half.x - SCREEN_TOL;
    }
    let monotone = (1..nw).all(|i| inner[i] >= inner[i - 1] && outer[i] >= outer[i - 1]);
    let mut min_grasp = [f64::INFINITY; MAX_OFFSETS];
    let mut min_base = [f64::INFINITY; MAX_OFFSETS];
    let mut finger_hit = [0u64; MAX_OFFSETS];
    for (_, l) in &scratch.kept {
        let ay = l.y.abs();
        if ay > lay.loose_hy + SCREEN_TOL {
            continue;
        }
        let ax = l.x.abs();
        let strict_y = ay <= lay.strict_hy - SCREEN_TOL;
        let mut in_finger = 0u64;
        for (oi, &o) in offsets.iter().enumerate() {
            let z = l.z - o;
            if z.abs() <= lay.loose_hz + SCREEN_TOL {
                min_grasp[oi] = min_grasp[oi].min(ax);
            }
            if strict_y {
                if z.abs() <= lay.strict_finger_hz - SCREEN_TOL {
                    in_finger |= 1 << oi;
                }
                if (z - lay.base_cz).abs() <= lay.strict_base_hz - SCREEN_TOL {
                    min_base[oi] = min_base[oi].min(ax);
                }
            }
        }
        if in_finger == 0 {
            continue;
        }
        let mut mask = 0u64;
        let first = if monotone {
            outer[..nw].partition_point(|&e| e < ax)
        } else {
            0
        };
        for wi in first..nw {
            if inner[wi] > ax {
                if monotone {
                    break;
                }
                continue;
            }
            if ax <= outer[wi] {
                mask |= 1 << wi;
            }
        }
        if mask != 0 {
            for (oi, hit) in finger_hit[..no].iter_mut().enumerate() {
                if in_finger & (1 << oi) != 0 {
                    *hit |= mask;
                }
            }
        }
    }
    let ruled_out = |oi: usize, wi: usize| {
        let m = &models[wi];
        finger_hit[oi] & (1 << wi) != 0
            || min_grasp[oi] > m.grasping.half.x + SCREEN_TOL
            || min_base[oi] <= m.occupied[2].half.x - SCREEN_TOL
    };

    let kept = &scratch.kept;
    let locals = &mut scratch.locals;
    let mut current: Option<(usize, Vec3)> = None;
    let (oi, wi) = select_lexicographic(no, nw, |oi, wi| {
        if ruled_out(oi, wi) {
            return false;
        }
        if current.map(|(o, _)| o) != Some(oi) {
            let center = anchor + approach * offsets[oi];
            locals.clear();
            locals.extend(kept.iter().map(|(p, _)| to_local(p, &center, rotation)));
            current = Some((oi, center));
        }
        classify(locals.iter(), &models[wi]).feasible()
    })?;
    let translation = match current {
        Some((o, c)) if o == oi => c,
        _ => anchor + approach * offsets[oi],
    };
    Some(GraspPose {
        translation,
        rotation: *rotation,
        width: widths[wi],
    })
}

const MAX_OFFSETS: usize = 32;

/// Union of every placement, in the frame centered on the anchor.
fn union_bounds(offsets: &[f64], models: &[GripperModel]) -> (Vec3, Vec3) {
    let (mut lo, mut hi) = models[0].local_bounds();
    for m in &models[1..] {
        let (l, h) = m.local_bounds();
        lo = lo.inf(&l);
        hi = hi.sup(&h);
    }
    let omin = offsets.iter().copied().fold(f64::INFINITY, f64::min);
    let omax = offsets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lo.z += omin;
    hi.z += omax;
    (lo, hi)
}

fn world_box(anchor: &Vec3, rotation: &Rotation, lo: Vec3, hi: Vec3) -> OrientedBox {
    LocalBox {
        center: (lo + hi) * 0.5,
        half: (hi - lo) * 0.5,
    }
    .to_world(anchor, rotation)
}

/// Plain enumeration with one exact transform per offset; used for grids the
/// screening bitmasks cannot hold.
fn search_exact<Q: PointQuery + ?Sized>(
    anchor: &Vec3,
    rotation: &Rotation,
    points: &Q,
    fas: &FasConfig,
    models: &[GripperModel],
    scratch: &mut SearchScratch,
) -> Option<GraspPose> {
    let offsets = &fas.depth_offsets;
    if offsets.is_empty() || models.is_empty() {
        return None;
    }
    let approach = approach_axis(rotation);
    let (lo, hi) = union_bounds(offsets, models);
    scratch.near.clear();
    points.gather(&world_bound(anchor, rotation, lo, hi), &mut scratch.near);
    let near = &scratch.near;
    let locals = &mut scratch.locals;
    let mut current = None;
    let (oi, wi) = select_lexicographic(offsets.len(), models.len(), |oi, wi| {
        if current != Some(oi) {
            let center = anchor + approach * offsets[oi];
            locals.clear();
            locals.extend(near.iter().map(|p| to_local(p, &center, rotation)));
            current = Some(oi);
        }
        classify(locals.iter(), &models[wi]).feasible()
    })?;
    Some(GraspPose {
        translation: anchor + approach * offsets[oi],
        rotation: *rotation,
        width: fas.widths[wi],
    })
}
