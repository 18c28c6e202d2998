//! Grasp detection from angle-view heatmaps.
//!
//! The pipeline is split in two halves. An *angle-view heatmap* (AVH) scores
//! every discretized gripper orientation (approach view × in-plane angle) at
//! every cell of an image grid. The analytic search in [`fas`] then recovers
//! the two remaining degrees of freedom, opening width and approach depth, by
//! rejecting gripper placements that either collide with the partial-view
//! point cloud or enclose nothing at all.
//!
//! Around that core sit the pieces needed to run and score it end to end:
//! pinhole back-projection and depth I/O ([`camera`]), ground-truth heatmap
//! labelling and the binary heatmap format ([`avh`]), pose-space NMS
//! ([`nms`]), the force-closure AP metric ([`eval`]) and analytic synthetic
//! scenes with oracle grasps ([`scenegen`]).

pub mod avh;
pub mod camera;
mod error;
pub mod eval;
pub mod fas;
pub mod geometry;
pub mod io;
pub mod nms;
pub mod par;
pub mod scenegen;

pub use error::{Error, Result};
pub use geometry::{Rotation, Vec3};
