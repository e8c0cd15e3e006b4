//! Candidate generation, block-diagonal cross evaluation and SNIS selection.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::dynamics::EgoState;
use crate::model::reward::{discounted_return, step_reward};
use crate::search::kernel::{BatchKernel, KernelContext};
use crate::spatial::aabb::{aabb_from_center, Aabb};
use crate::spatial::obb::{sat_overlap_pairs, ObbFrame};

/// Ego motion under the plan in one scenario, one entry per control step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrajectory {
    /// Scenario the trajectory was simulated in.
    pub scenario: usize,
    pub states: Vec<EgoState>,
    /// Arc length at the start and after each step.
    pub s: Vec<f64>,
    pub accel: Vec<f64>,
}

impl CandidateTrajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `values[k * n + i]` is the return of candidate `k` against scenario `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationBlock {
    /// Global id of the block's first scenario.
    pub first: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl EvaluationBlock {
    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.values[k * self.n + i]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }
}

/// Simulates `policy` in every scenario of `scenarios` (local indices into
/// `ctx.scenarios`) with the lockstep kernel. `first` offsets the ids.
pub fn generate_candidates(
    kernel: &mut BatchKernel,
    ctx: &KernelContext,
    policy: &[usize],
    scenarios: &[usize],
    ego: &EgoState,
    first: usize,
) -> Result<Vec<CandidateTrajectory>> {
    if policy.is_empty() {
        return Err(Error::EmptyActionSequence);
    }
    let mut out = Vec::with_capacity(scenarios.len());
    let mut traces = Vec::new();
    for chunk in scenarios.chunks(kernel.width()) {
        let starts: Vec<Option<(usize, EgoState)>> = chunk.iter().map(|&s| Some((s, *ego))).collect();
        kernel.simulate_sequences(ctx, &starts, policy, &mut traces);
        for (&s, t) in chunk.iter().zip(traces.drain(..)) {
            let t = t.expect("every slot was active");
            out.push(CandidateTrajectory { scenario: first + s, states: t.states, s: t.s, accel: t.accel });
        }
    }
    Ok(out)
}

/// Evaluates every candidate of a minibatch against every scenario of the
/// same minibatch as a fixed ego path. `scenarios[i]` indexes `ctx.scenarios`.
pub fn cross_evaluate_block(ctx: &KernelContext, candidates: &[CandidateTrajectory], scenarios: &[usize], first: usize) -> Result<EvaluationBlock> {
    let n = candidates.len();
    if scenarios.len() != n {
        return Err(Error::InvalidConfig(format!("{n} candidates against {} scenarios", scenarios.len())));
    }
    let p = ctx.model.params;
    let vp = &p.vehicle;
    let spa = p.steps_per_action;
    let path = &ctx.model.road.centerline;
    let steps = candidates.first().map_or(0, CandidateTrajectory::len);
    let mut values = vec![0.0; n * n];

    // Ego geometry is scenario independent; prepare it once per candidate.
    let mut ego_frames: Vec<Vec<ObbFrame>> = Vec::with_capacity(n);
    let mut ego_boxes: Vec<Vec<Aabb>> = Vec::with_capacity(n);
    for c in candidates {
        ego_frames.push(c.states.iter().map(|e| ObbFrame::new(e.x, e.y, e.heading, vp.half_length, vp.half_width)).collect());
        ego_boxes.push(
            c.states
                .iter()
                .map(|e| {
                    let f = path.project(e.x, e.y);
                    if f.clamped {
                        Aabb::EVERYTHING
                    } else {
                        aabb_from_center(f.s, f.d, crate::math::wrap_angle(e.heading - f.heading), vp.half_length, vp.half_width, ctx.margin)
                    }
                })
                .collect(),
        );
    }

    let mut stack = Vec::new();
    let mut found = Vec::new();
    let mut pair_k = Vec::new();
    let mut pair_a = Vec::new();
    let mut pair_b = Vec::new();
    let mut flags = Vec::new();
    for (i, &si) in scenarios.iter().enumerate() {
        let prep = &ctx.scenarios[si];
        let mut alive = vec![true; n];
        let mut level = vec![0.0; n];
        let mut levels: Vec<Vec<f64>> = vec![Vec::with_capacity(steps / spa.max(1)); n];
        for f in 0..steps {
            let frame = f + 1;
            let tree = prep.tree_for_frame(frame);
            let obbs = prep.frames.obbs(frame);
            pair_k.clear();
            pair_a.clear();
            pair_b.clear();
            for k in 0..n {
                if !alive[k] {
                    continue;
                }
                found.clear();
                tree.query_into(&ego_boxes[k][f], &mut stack, &mut found);
                for &id in &found {
                    pair_k.push(k);
                    pair_a.push(ego_frames[k][f]);
                    pair_b.push(obbs[id as usize]);
                }
            }
            sat_overlap_pairs::<8>(&pair_a, &pair_b, &mut flags);
            let mut hit = vec![false; n];
            for (&k, &h) in pair_k.iter().zip(&flags) {
                hit[k] |= h;
            }
            for k in 0..n {
                if !alive[k] {
                    continue;
                }
                let c = &candidates[k];
                level[k] += step_reward(hit[k], c.s[f + 1] - c.s[f], c.accel[f], &p.reward);
                if hit[k] {
                    alive[k] = false;
                    levels[k].push(level[k]);
                } else if (f + 1) % spa == 0 {
                    levels[k].push(level[k]);
                    level[k] = 0.0;
                }
            }
        }
        for k in 0..n {
            values[k * n + i] = discounted_return(&levels[k], p.reward.discount);
        }
    }
    Ok(EvaluationBlock { first, n, values })
}

/// Self-normalised importance-sampling mean.
pub fn snis_value(values: &[f64], weights: &[f64]) -> Result<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeights);
    }
    let mut acc = 0.0;
    for (v, w) in values.iter().zip(weights) {
        acc += w * v;
    }
    Ok(acc / total)
}

/// Winning candidate: its block, its row and its score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub block: usize,
    pub candidate: usize,
    pub score: f64,
}

/// Scores each candidate by SNIS over its own block and returns the best;
/// ties go to the lowest scenario id.
pub fn select_trajectory(blocks: &[EvaluationBlock], weights: &[Vec<f64>]) -> Result<Selection> {
    let mut best: Option<Selection> = None;
    for (b, (block, w)) in blocks.iter().zip(weights).enumerate() {
        for k in 0..block.n {
            let score = snis_value(block.row(k), w)?;
            if best.map_or(true, |s| score > s.score) {
                best = Some(Selection { block: b, candidate: k, score });
            }
        }
    }
    best.ok_or(Error::NoScenarios)
}

/// Writes every block as `block,candidate,scenario,weight,value` rows.
pub fn write_blocks_csv<W: Write>(w: W, blocks: &[EvaluationBlock], weights: &[Vec<f64>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["block", "candidate", "scenario", "weight", "value"])?;
    for (b, (block, ws)) in blocks.iter().zip(weights).enumerate() {
        for k in 0..block.n {
            for i in 0..block.n {
                out.write_record(&[b.to_string(), (block.first + k).to_string(), (block.first + i).to_string(), ws[i].to_string(), block.get(k, i).to_string()])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scene::{generate_scene, Layout};
    use crate::model::action::ActionSet;
    use crate::model::belief::sample_scenarios;
    use crate::model::transition::{collides_brute_force, simulate_sequence, ModelParams, TransitionModel};
    use crate::search::config::SpatialParams;
    use crate::search::prepared::PreparedScenario;
    use proptest::prelude::*;

    #[test]
    fn snis_examples() {
        assert_eq!(snis_value(&[1.0, 0.0, 0.0], &[2.0, 1.0, 1.0]).unwrap(), 0.5);
        assert_eq!(snis_value(&[3.0, 5.0], &[0.7, 0.7]).unwrap(), 4.0);
        assert!(matches!(snis_value(&[1.0], &[0.0]), Err(Error::ZeroWeights)));
    }

    #[test]
    fn single_candidate_wins() {
        let b = EvaluationBlock { first: 0, n: 1, values: vec![-3.0] };
        assert_eq!(select_trajectory(&[b], &[vec![1.0]]).unwrap(), Selection { block: 0, candidate: 0, score: -3.0 });
    }

    #[test]
    fn collision_free_candidate_dominates() {
        let b = EvaluationBlock { first: 0, n: 3, values: vec![50.0, -900.0, 40.0, 10.0, 12.0, 11.0, 60.0, 55.0, -950.0] };
        assert_eq!(select_trajectory(&[b], &[vec![1.0; 3]]).unwrap().candidate, 1);
    }

    /// Scalar pairwise oracle: fixed ego path against one scenario, brute force.
    fn pairwise(model: &TransitionModel, prep: &PreparedScenario, c: &CandidateTrajectory) -> f64 {
        let p = model.params;
        let mut levels = Vec::new();
        let mut level = 0.0;
        for f in 0..c.len() {
            let hit = collides_brute_force(&model.ego_frame(&c.states[f]), prep.frames.obbs(f + 1));
            level += step_reward(hit, c.s[f + 1] - c.s[f], c.accel[f], &p.reward);
            if hit {
                levels.push(level);
                break;
            }
            if (f + 1) % p.steps_per_action == 0 {
                levels.push(level);
                level = 0.0;
            }
        }
        discounted_return(&levels, p.reward.discount)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn block_matches_pairwise_and_diagonal(seed in 0u64..1000, policy in proptest::collection::vec(0usize..9, 4)) {
            let scene = generate_scene(30, Layout::Crossing, seed).unwrap();
            let road = scene.build_road().unwrap();
            let params = ModelParams::default();
            let actions = ActionSet::full(params.action_duration());
            let sc = sample_scenarios(&scene.belief(), &scene.state(), &road, 8, seed, params.total_steps(), params.dt).unwrap();
            let prepared: Vec<PreparedScenario> = sc.iter().map(|s| PreparedScenario::build(&road, s, &params, &SpatialParams::default())).collect();
            let ctx = KernelContext { model: TransitionModel::new(&road, &actions, &params, &scene.ego), scenarios: &prepared, margin: 0.1 };
            let ids: Vec<usize> = (0..8).collect();
            let mut kernel = BatchKernel::for_lanes(8);
            let cands = generate_candidates(&mut kernel, &ctx, &policy, &ids, &scene.ego, 0).unwrap();
            let block = cross_evaluate_block(&ctx, &cands, &ids, 0).unwrap();
            for k in 0..8 {
                let own = simulate_sequence(&ctx.model, &prepared[k].frames, &scene.ego, &policy).unwrap();
                prop_assert_eq!(&cands[k].states, &own.states);
                prop_assert_eq!(block.get(k, k).to_bits(), own.discounted_return(params.reward.discount).to_bits());
                for i in 0..8 {
                    prop_assert_eq!(block.get(k, i).to_bits(), pairwise(&ctx.model, &prepared[i], &cands[k]).to_bits());
                }
            }
        }
    }

    #[test]
    fn empty_policy_is_rejected() {
        let scene = generate_scene(0, Layout::Highway, 0).unwrap();
        let road = scene.build_road().unwrap();
        let params = ModelParams::default();
        let actions = ActionSet::full(params.action_duration());
        let ctx = KernelContext { model: TransitionModel::new(&road, &actions, &params, &scene.ego), scenarios: &[], margin: 0.1 };
        let mut kernel = BatchKernel::for_lanes(1);
        assert!(matches!(generate_candidates(&mut kernel, &ctx, &[], &[], &scene.ego, 0), Err(Error::EmptyActionSequence)));
    }
}
