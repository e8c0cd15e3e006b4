//! Frenet-frame broad phase (STR tree over AABBs) and SAT narrow phase.

pub mod aabb;
pub mod obb;
pub mod str_tree;

pub use aabb::{aabb_from_center, frenet_aabb, Aabb};
pub use obb::{sat_overlap, sat_overlap_batch, Obb, ObbFrame};
pub use str_tree::{build_str_tree, StrTree};
