//! Per-scenario data built once per planning cycle: agent Frenet columns for
//! every frame and one STR tree per macro-action interval.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::belief::Scenario;
use crate::model::geometry::Road;
use crate::model::transition::{FrenetCache, ModelParams, ScenarioFrames};
use crate::search::config::SpatialParams;
use crate::spatial::aabb::{aabb_from_center, Aabb};
use crate::spatial::str_tree::{build_str_tree, StrTree};

#[derive(Clone, Debug)]
pub struct PreparedScenario {
    pub frames: ScenarioFrames,
    /// Tree `k` bounds every agent over collision frames `k * steps + 1 ..= (k + 1) * steps`.
    pub intervals: Vec<StrTree>,
    pub steps_per_interval: usize,
}

/// Frenet box of agent `j` at `frame`; unbounded when its projection was clamped.
pub fn agent_box(frames: &ScenarioFrames, frame: usize, j: usize, margin: f64) -> Aabb {
    let i = frame * frames.agents + j;
    if frames.clamped[i] {
        return Aabb::EVERYTHING;
    }
    aabb_from_center(frames.s[i], frames.d[i], frames.rel_heading[i], frames.half_length[j], frames.half_width[j], margin)
}

/// Shared work across the scenarios of one planning cycle: Frenet columns
/// and per-interval boxes of every library trajectory.
#[derive(Debug, Default)]
pub struct PrepareCache {
    pub frenet: FrenetCache,
    boxes: HashMap<usize, Vec<Aabb>>,
}

impl PrepareCache {
    pub fn new() -> Self {
        Self::default()
    }
}

impl PreparedScenario {
    pub fn build(road: &Road, scenario: &Scenario, model: &ModelParams, spatial: &SpatialParams) -> Self {
        Self::build_cached(road, scenario, model, spatial, &mut PrepareCache::new())
    }

    /// Like [`PreparedScenario::build`]; `cache` must only be shared between
    /// calls with the same road, model and spatial parameters.
    pub fn build_cached(road: &Road, scenario: &Scenario, model: &ModelParams, spatial: &SpatialParams, cache: &mut PrepareCache) -> Self {
        let frames = ScenarioFrames::build_cached(road, scenario, &mut cache.frenet);
        let spa = model.steps_per_action;
        for (j, t) in scenario.trajectories.iter().enumerate() {
            cache.boxes.entry(Arc::as_ptr(t) as usize).or_insert_with(|| {
                (0..model.depth)
                    .map(|k| {
                        let mut b = Aabb::EMPTY;
                        for f in k * spa + 1..=((k + 1) * spa).min(frames.frames - 1) {
                            b = b.union(&agent_box(&frames, f, j, spatial.margin));
                        }
                        b
                    })
                    .collect()
            });
        }
        let mut intervals = Vec::with_capacity(model.depth);
        let mut boxes = Vec::with_capacity(frames.agents);
        for k in 0..model.depth {
            boxes.clear();
            for (j, t) in scenario.trajectories.iter().enumerate() {
                let b = cache.boxes[&(Arc::as_ptr(t) as usize)][k];
                if !b.is_empty() {
                    boxes.push((b, j as u32));
                }
            }
            intervals.push(build_str_tree(&boxes, spatial.branching, spatial.leaf_capacity));
        }
        Self { frames, intervals, steps_per_interval: spa }
    }

    /// STR tree covering collision frame `frame`.
    #[inline]
    pub fn tree_for_frame(&self, frame: usize) -> &StrTree {
        &self.intervals[(frame - 1) / self.steps_per_interval]
    }
}
