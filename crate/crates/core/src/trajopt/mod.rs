//! Trajectory refinement after search: resample scenarios under a
//! hazard-tilted proposal, simulate the plan in each, cross-evaluate within
//! minibatches and keep the candidate with the best importance-weighted value.

pub mod evaluate;
pub mod proposal;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use evaluate::{cross_evaluate_block, generate_candidates, select_trajectory, snis_value, CandidateTrajectory, EvaluationBlock, Selection};
pub use proposal::{build_proposal, identify_critical_agents, resample_with_proposal, ProposalDistribution, WeightedScenario};

use crate::error::Result;
use crate::model::belief::{Belief, SceneState, TrajectoryLibrary};
use crate::model::geometry::Road;
use crate::model::transition::TransitionModel;
use crate::search::config::SearchConfig;
use crate::search::kernel::{BatchKernel, KernelContext};
use crate::search::planner::worker_minibatches;
use crate::search::prepared::{PrepareCache, PreparedScenario};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineParams {
    /// Hazardous mass is scaled by `1 / (1 - tilt)` for critical agents.
    pub tilt: f64,
    pub corridor_half_width: f64,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self { tilt: 0.8, corridor_half_width: 3.5 }
    }
}

#[derive(Clone, Debug)]
pub struct RefineOutput {
    pub trajectory: CandidateTrajectory,
    pub selection: Selection,
    pub critical: Vec<usize>,
    pub blocks: Vec<EvaluationBlock>,
    pub weights: Vec<Vec<f64>>,
    pub wall_ms: f64,
}

/// Seed offset separating refinement draws from the search draws.
const RESAMPLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Refines `policy` (indices into `config`'s action set) into one ego trajectory.
pub fn refine(road: &Road, belief: &Belief, state: &SceneState, policy: &[usize], config: &SearchConfig, params: &RefineParams) -> Result<RefineOutput> {
    let start = Instant::now();
    config.validate()?;
    let actions = config.action_set()?;
    let p = &config.model;
    let library = TrajectoryLibrary::build(belief, state, road, p.total_steps(), p.dt)?;
    let lane = road.nearest_lane(road.centerline.project(state.ego.x, state.ego.y).d);
    let ego_path = road.centerline.offset(road.lane_center(lane))?;
    let critical = identify_critical_agents(&library, belief, state, &ego_path, params.corridor_half_width);
    let proposal = build_proposal(belief, &critical, params.tilt)?;
    let weighted = resample_with_proposal(&library, belief, state, &proposal, config.scenarios, config.seed ^ RESAMPLE_SALT)?;

    let w = config.batch_width;
    let nb = config.minibatches();
    let model = TransitionModel::new(road, &actions, p, &state.ego);
    let run = |range: std::ops::Range<usize>| -> Result<Vec<EvaluationBlock>> {
        let first = range.start * w;
        let mut cache = PrepareCache::new();
        let prepared: Vec<PreparedScenario> = weighted[first..range.end * w].iter().map(|ws| PreparedScenario::build_cached(road, &ws.scenario, p, &config.spatial, &mut cache)).collect();
        let ctx = KernelContext { model, scenarios: &prepared, margin: config.spatial.margin };
        let mut kernel = BatchKernel::for_lanes(w);
        let mut blocks = Vec::with_capacity(range.len());
        for m in 0..range.len() {
            let ids: Vec<usize> = (m * w..(m + 1) * w).collect();
            let cands = generate_candidates(&mut kernel, &ctx, policy, &ids, &state.ego, first)?;
            blocks.push(cross_evaluate_block(&ctx, &cands, &ids, first + m * w)?);
        }
        Ok(blocks)
    };
    let mut blocks = Vec::with_capacity(nb);
    if config.workers == 1 {
        blocks = run(0..nb)?;
    } else {
        let results: Vec<Result<Vec<EvaluationBlock>>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..config.workers).map(|wi| {
                let run = &run;
                s.spawn(move || run(worker_minibatches(nb, config.workers, wi)))
            }).collect();
            handles.into_iter().map(|h| h.join().expect("refinement worker panicked")).collect()
        });
        for r in results {
            blocks.extend(r?);
        }
    }
    let weights: Vec<Vec<f64>> = (0..nb).map(|m| weighted[m * w..(m + 1) * w].iter().map(|ws| ws.weight).collect()).collect();
    let selection = select_trajectory(&blocks, &weights)?;

    // Re-simulate the winner alone; the kernel output is lane independent.
    let winner = blocks[selection.block].first + selection.candidate;
    let prepared = [PreparedScenario::build(road, &weighted[winner].scenario, p, &config.spatial)];
    let ctx = KernelContext { model, scenarios: &prepared, margin: config.spatial.margin };
    let mut trajectory = generate_candidates(&mut BatchKernel::for_lanes(1), &ctx, policy, &[0], &state.ego, winner)?.remove(0);
    trajectory.scenario = winner;
    Ok(RefineOutput { trajectory, selection, critical, blocks, weights, wall_ms: start.elapsed().as_secs_f64() * 1e3 })
}
