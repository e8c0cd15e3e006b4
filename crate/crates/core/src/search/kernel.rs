//! Step-synchronous lane kernel.
//!
//! `W` lanes, each bound to its own scenario, advance one control step at a
//! time. Per step the kernel runs
//!
//! 1. per-lane lateral target and leader search (active lanes only),
//! 2. the control and integration update across all lanes,
//! 3. a lane-parallel nearest-segment scan for the new poses, then a per-lane
//!    refinement of the Frenet projection,
//! 4. a per-lane STR broad phase whose candidate pairs are pooled and tested
//!    in masked SAT batches,
//! 5. masked reward accumulation and retirement of lanes that collide or reach
//!    their last level.
//!
//! Stages 2 and 3 are plain loops over fixed-size lane arrays so the compiler
//! can vectorize them; masked lanes are computed and discarded. Every per-lane
//! value goes through the same functions as the scalar transition, which keeps
//! the results bit-identical to it.

use crate::math::wrap_angle;
use crate::model::dynamics::{step_ego, EgoState, Neighbor};
use crate::model::geometry::{segment_dist2, FrenetPoint};
use crate::model::reward::{discounted_return, step_reward};
use crate::model::transition::{find_leader, lateral_target, MacroOutcome, SequenceTrace, TransitionModel};
use crate::search::prepared::PreparedScenario;
use crate::spatial::aabb::{aabb_from_center, Aabb};
use crate::spatial::obb::{sat_overlap_batch, ObbFrame};

#[derive(Clone, Copy)]
pub struct KernelContext<'a> {
    pub model: TransitionModel<'a>,
    pub scenarios: &'a [PreparedScenario],
    pub margin: f64,
}

/// One expansion request: run `action` from the node's cached ego state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionSlot {
    pub scenario: usize,
    pub node: usize,
    pub action: usize,
    pub depth: usize,
    pub ego: EgoState,
}

/// One rollout request: repeat `action` from `depth` to the horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutSlot {
    pub scenario: usize,
    pub action: usize,
    pub depth: usize,
    pub ego: EgoState,
}

#[derive(Clone, Copy, Debug)]
struct LaneStart {
    scenario: usize,
    ego: EgoState,
    depth: usize,
    levels: usize,
    action: usize,
}

#[derive(Clone, Copy)]
enum ActionPlan<'a> {
    Repeat,
    Sequence(&'a [usize]),
}

#[derive(Clone, Debug, Default)]
struct LaneResult {
    ego: Option<EgoState>,
    terminal: bool,
    steps: usize,
    level_rewards: Vec<f64>,
    first_collision: Option<usize>,
    trace: Option<SequenceTrace>,
}

/// Kernel for a fixed lane count, holding reusable scratch buffers.
pub struct LaneKernel<const W: usize> {
    results: Vec<LaneResult>,
    pair_lane: Vec<usize>,
    pair_ego: Vec<ObbFrame>,
    pair_agent: Vec<ObbFrame>,
    candidates: Vec<u32>,
    stack: Vec<u32>,
}

impl<const W: usize> Default for LaneKernel<W> {
    fn default() -> Self {
        Self::new()
    }
}

#[inline(always)]
fn scan_nearest<const W: usize>(model: &TransitionModel, px: &[f64; W], py: &[f64; W]) -> [usize; W] {
    let seg = model.road.centerline.segments();
    let mut best = [f64::INFINITY; W];
    let mut idx = [0usize; W];
    for j in 0..seg.len.len() {
        let (ax, ay, ux, uy, len) = (seg.ax[j], seg.ay[j], seg.ux[j], seg.uy[j], seg.len[j]);
        for l in 0..W {
            let d2 = segment_dist2(ax, ay, ux, uy, len, px[l], py[l]);
            let better = d2 < best[l];
            best[l] = if better { d2 } else { best[l] };
            idx[l] = if better { j } else { idx[l] };
        }
    }
    idx
}

impl<const W: usize> LaneKernel<W> {
    pub fn new() -> Self {
        Self {
            results: vec![LaneResult::default(); W],
            pair_lane: Vec::new(),
            pair_ego: Vec::new(),
            pair_agent: Vec::new(),
            candidates: Vec::new(),
            stack: Vec::new(),
        }
    }

    fn run(&mut self, ctx: &KernelContext, starts: &[Option<LaneStart>], plan: ActionPlan, stop_on_collision: bool, record: bool) {
        assert!(starts.len() <= W, "batch of {} slots exceeds kernel width {W}", starts.len());
        let model = &ctx.model;
        let p = model.params;
        let vp = &p.vehicle;
        let spa = p.steps_per_action;
        let band = 0.5 * model.road.lane_width;
        let path = &model.road.centerline;

        let mut active = [false; W];
        let mut scen = [0usize; W];
        let mut ex = [0.0f64; W];
        let mut ey = [0.0f64; W];
        let mut eh = [0.0f64; W];
        let mut ev = [0.0f64; W];
        let mut at = [FrenetPoint { s: 0.0, d: 0.0, heading: 0.0, segment: 0, clamped: false }; W];
        let mut level = [0usize; W];
        let mut end_level = [0usize; W];
        let mut action = [0usize; W];
        let mut committed = [false; W];
        let mut level_reward = [0.0f64; W];
        let mut reward_open = [true; W];

        for l in 0..W {
            let r = &mut self.results[l];
            r.ego = None;
            r.terminal = false;
            r.steps = 0;
            r.level_rewards.clear();
            r.first_collision = None;
            r.trace = None;
            let Some(st) = starts.get(l).copied().flatten() else { continue };
            r.ego = Some(st.ego);
            if record {
                let n = st.levels * spa;
                r.trace = Some(SequenceTrace {
                    states: Vec::with_capacity(n),
                    s: Vec::with_capacity(n + 1),
                    accel: Vec::with_capacity(n),
                    level_rewards: Vec::new(),
                    first_collision: None,
                });
            }
            if st.levels == 0 {
                continue;
            }
            active[l] = true;
            scen[l] = st.scenario;
            ex[l] = st.ego.x;
            ey[l] = st.ego.y;
            eh[l] = st.ego.heading;
            ev[l] = st.ego.speed;
            level[l] = st.depth;
            end_level[l] = st.depth + st.levels;
            action[l] = match plan {
                ActionPlan::Repeat => st.action,
                ActionPlan::Sequence(seq) => seq[st.depth],
            };
        }
        if !active.iter().any(|&a| a) {
            return;
        }
        let idx = scan_nearest::<W>(model, &ex, &ey);
        for l in 0..W {
            if active[l] {
                at[l] = path.project_from_segment(ex[l], ey[l], idx[l]);
                if let Some(t) = self.results[l].trace.as_mut() {
                    t.s.push(at[l].s);
                }
            }
        }

        let mut target = [0.0f64; W];
        let mut lead_gap = [f64::INFINITY; W];
        let mut lead_speed = [0.0f64; W];
        let mut j = 0;
        while active.iter().any(|&a| a) {
            // 1. lateral target and leader
            for l in 0..W {
                if !active[l] {
                    continue;
                }
                let frames = &ctx.scenarios[scen[l]].frames;
                let cols = frames.columns(level[l] * spa + j);
                let a = model.actions.get(action[l]);
                target[l] = lateral_target(model, &at[l], ev[l], &a, &mut committed[l], &cols);
                let n = find_leader(at[l].s, at[l].d, vp.half_length, band, &cols);
                lead_gap[l] = n.gap;
                lead_speed[l] = n.speed;
            }
            // 2. control and integration across all lanes
            let mut nx = [0.0f64; W];
            let mut ny = [0.0f64; W];
            let mut nh = [0.0f64; W];
            let mut nv = [0.0f64; W];
            let mut acc = [0.0f64; W];
            for l in 0..W {
                let ego = EgoState { x: ex[l], y: ey[l], heading: eh[l], speed: ev[l] };
                let st = step_ego(&ego, &at[l], target[l], Neighbor { gap: lead_gap[l], speed: lead_speed[l] }, vp, p.dt);
                nx[l] = st.state.x;
                ny[l] = st.state.y;
                nh[l] = st.state.heading;
                nv[l] = st.state.speed;
                acc[l] = st.accel;
            }
            // 3. projection
            let idx = scan_nearest::<W>(model, &nx, &ny);
            let mut nat = at;
            for l in 0..W {
                if active[l] {
                    nat[l] = path.project_from_segment(nx[l], ny[l], idx[l]);
                }
            }
            // 4. broad phase per lane, pooled narrow phase
            self.pair_lane.clear();
            self.pair_ego.clear();
            self.pair_agent.clear();
            for l in 0..W {
                if !active[l] {
                    continue;
                }
                let prep = &ctx.scenarios[scen[l]];
                let frame = level[l] * spa + j + 1;
                let q = if nat[l].clamped {
                    Aabb::EVERYTHING
                } else {
                    aabb_from_center(nat[l].s, nat[l].d, wrap_angle(nh[l] - nat[l].heading), vp.half_length, vp.half_width, ctx.margin)
                };
                self.candidates.clear();
                prep.tree_for_frame(frame).query_into(&q, &mut self.stack, &mut self.candidates);
                if self.candidates.is_empty() {
                    continue;
                }
                let ego_obb = ObbFrame::new(nx[l], ny[l], nh[l], vp.half_length, vp.half_width);
                let obbs = prep.frames.obbs(frame);
                for &id in &self.candidates {
                    self.pair_lane.push(l);
                    self.pair_ego.push(ego_obb);
                    self.pair_agent.push(obbs[id as usize]);
                }
            }
            let mut hit = [false; W];
            let mut start = 0;
            while start < self.pair_lane.len() {
                let n = (self.pair_lane.len() - start).min(W);
                let mut a = [ObbFrame::default(); W];
                let mut b = [ObbFrame::default(); W];
                let mut mask = [false; W];
                for k in 0..n {
                    a[k] = self.pair_ego[start + k];
                    b[k] = self.pair_agent[start + k];
                    mask[k] = true;
                }
                let flags = sat_overlap_batch::<W>(&a, &b, mask);
                for k in 0..n {
                    hit[self.pair_lane[start + k]] |= flags[k];
                }
                start += n;
            }
            // 5. masked writeback
            for l in 0..W {
                if !active[l] {
                    continue;
                }
                let r = step_reward(hit[l], nat[l].s - at[l].s, acc[l], &p.reward);
                let res = &mut self.results[l];
                if res.first_collision.is_none() {
                    level_reward[l] += r;
                    if hit[l] {
                        res.first_collision = Some(level[l] * spa + j);
                    }
                }
                ex[l] = nx[l];
                ey[l] = ny[l];
                eh[l] = nh[l];
                ev[l] = nv[l];
                at[l] = nat[l];
                res.steps += 1;
                let ego = EgoState { x: nx[l], y: ny[l], heading: nh[l], speed: nv[l] };
                res.ego = Some(ego);
                if let Some(t) = res.trace.as_mut() {
                    t.states.push(ego);
                    t.s.push(nat[l].s);
                    t.accel.push(acc[l]);
                }
                if hit[l] && stop_on_collision {
                    res.level_rewards.push(level_reward[l]);
                    res.terminal = true;
                    active[l] = false;
                }
            }
            j += 1;
            if j == spa {
                j = 0;
                for l in 0..W {
                    if !active[l] {
                        continue;
                    }
                    let res = &mut self.results[l];
                    if reward_open[l] {
                        res.level_rewards.push(level_reward[l]);
                        reward_open[l] = res.first_collision.is_none();
                    }
                    level_reward[l] = 0.0;
                    committed[l] = false;
                    level[l] += 1;
                    if level[l] == end_level[l] {
                        active[l] = false;
                    } else {
                        action[l] = match plan {
                            ActionPlan::Repeat => action[l],
                            ActionPlan::Sequence(seq) => seq[level[l]],
                        };
                    }
                }
            }
        }
        if record {
            for r in self.results.iter_mut() {
                if let Some(t) = r.trace.as_mut() {
                    t.level_rewards.clone_from(&r.level_rewards);
                    t.first_collision = r.first_collision;
                }
            }
        }
    }

    /// Runs one macro-action per slot.
    pub fn expand(&mut self, ctx: &KernelContext, slots: &[Option<ExpansionSlot>], out: &mut Vec<Option<MacroOutcome>>) {
        let starts: Vec<Option<LaneStart>> = slots
            .iter()
            .map(|s| s.map(|s| LaneStart { scenario: s.scenario, ego: s.ego, depth: s.depth, levels: 1, action: s.action }))
            .collect();
        self.run(ctx, &starts, ActionPlan::Repeat, true, false);
        out.clear();
        out.extend(slots.iter().zip(&self.results).map(|(s, r)| {
            s.map(|_| MacroOutcome {
                ego: r.ego.expect("active slot has an ego state"),
                reward: r.level_rewards.first().copied().unwrap_or(0.0),
                terminal: r.terminal,
                steps: r.steps,
            })
        }));
    }

    /// Discounted return per slot of repeating its action to the horizon.
    pub fn rollout(&mut self, ctx: &KernelContext, slots: &[Option<RolloutSlot>], out: &mut Vec<Option<f64>>) {
        let depth = ctx.model.params.depth;
        let gamma = ctx.model.params.reward.discount;
        let starts: Vec<Option<LaneStart>> = slots
            .iter()
            .map(|s| {
                s.map(|s| LaneStart { scenario: s.scenario, ego: s.ego, depth: s.depth, levels: depth.saturating_sub(s.depth), action: s.action })
            })
            .collect();
        self.run(ctx, &starts, ActionPlan::Repeat, true, false);
        out.clear();
        out.extend(slots.iter().zip(&self.results).map(|(s, r)| s.map(|_| discounted_return(&r.level_rewards, gamma))));
    }

    /// Ego traces under a fixed action sequence, one per scenario index.
    pub fn simulate_sequences(&mut self, ctx: &KernelContext, scenarios: &[Option<(usize, EgoState)>], actions: &[usize], out: &mut Vec<Option<SequenceTrace>>) {
        let starts: Vec<Option<LaneStart>> = scenarios
            .iter()
            .map(|s| s.map(|(scenario, ego)| LaneStart { scenario, ego, depth: 0, levels: actions.len(), action: 0 }))
            .collect();
        self.run(ctx, &starts, ActionPlan::Sequence(actions), false, true);
        out.clear();
        out.extend(scenarios.iter().zip(self.results.iter_mut()).map(|(s, r)| s.and_then(|_| r.trace.take())));
    }
}

/// Lane kernel for any supported width, chosen at runtime.
pub enum BatchKernel {
    W1(Box<LaneKernel<1>>),
    W2(Box<LaneKernel<2>>),
    W4(Box<LaneKernel<4>>),
    W8(Box<LaneKernel<8>>),
    W16(Box<LaneKernel<16>>),
}

macro_rules! dispatch {
    ($self:expr, $k:ident => $body:expr) => {
        match $self {
            BatchKernel::W1($k) => $body,
            BatchKernel::W2($k) => $body,
            BatchKernel::W4($k) => $body,
            BatchKernel::W8($k) => $body,
            BatchKernel::W16($k) => $body,
        }
    };
}

impl BatchKernel {
    /// Smallest compiled width that holds `lanes` slots.
    pub fn for_lanes(lanes: usize) -> Self {
        match lanes {
            0..=1 => BatchKernel::W1(Box::default()),
            2 => BatchKernel::W2(Box::default()),
            3..=4 => BatchKernel::W4(Box::default()),
            5..=8 => BatchKernel::W8(Box::default()),
            9..=16 => BatchKernel::W16(Box::default()),
            _ => panic!("no lane kernel wider than 16"),
        }
    }

    pub fn width(&self) -> usize {
        match self {
            BatchKernel::W1(_) => 1,
            BatchKernel::W2(_) => 2,
            BatchKernel::W4(_) => 4,
            BatchKernel::W8(_) => 8,
            BatchKernel::W16(_) => 16,
        }
    }

    pub fn expand(&mut self, ctx: &KernelContext, slots: &[Option<ExpansionSlot>], out: &mut Vec<Option<MacroOutcome>>) {
        dispatch!(self, k => k.expand(ctx, slots, out))
    }

    pub fn rollout(&mut self, ctx: &KernelContext, slots: &[Option<RolloutSlot>], out: &mut Vec<Option<f64>>) {
        dispatch!(self, k => k.rollout(ctx, slots, out))
    }

    pub fn simulate_sequences(&mut self, ctx: &KernelContext, scenarios: &[Option<(usize, EgoState)>], actions: &[usize], out: &mut Vec<Option<SequenceTrace>>) {
        dispatch!(self, k => k.simulate_sequences(ctx, scenarios, actions, out))
    }
}

/// Advances every active slot by one macro-action in lockstep.
pub fn vectorized_expansion(ctx: &KernelContext, slots: &[Option<ExpansionSlot>]) -> Vec<Option<MacroOutcome>> {
    let mut out = Vec::with_capacity(slots.len());
    BatchKernel::for_lanes(slots.len()).expand(ctx, slots, &mut out);
    out
}

/// Rolls every active slot out to the horizon in lockstep.
pub fn vectorized_rollout(ctx: &KernelContext, slots: &[Option<RolloutSlot>]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(slots.len());
    BatchKernel::for_lanes(slots.len()).rollout(ctx, slots, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scene::{generate_scene, Layout};
    use crate::model::action::ActionSet;
    use crate::model::belief::sample_scenarios;
    use crate::model::geometry::Road;
    use crate::model::transition::{scalar_rollout, simulate_macro_action, simulate_sequence, ModelParams};
    use crate::search::config::SpatialParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        road: Road,
        actions: ActionSet,
        params: ModelParams,
        prepared: Vec<PreparedScenario>,
        ego: EgoState,
    }

    fn fixture(density: usize, layout: Layout, seed: u64) -> Fixture {
        let scene = generate_scene(density, layout, seed).unwrap();
        let road = scene.build_road().unwrap();
        let params = ModelParams::default();
        let scenarios = sample_scenarios(&scene.belief(), &scene.state(), &road, 8, seed, params.total_steps(), params.dt).unwrap();
        let prepared = scenarios.iter().map(|s| PreparedScenario::build(&road, s, &params, &SpatialParams::default())).collect();
        Fixture { actions: ActionSet::full(params.action_duration()), road, params, prepared, ego: scene.ego }
    }

    impl Fixture {
        fn ctx(&self) -> KernelContext<'_> {
            KernelContext { model: TransitionModel::new(&self.road, &self.actions, &self.params, &self.ego), scenarios: &self.prepared, margin: 0.1 }
        }
    }

    /// Ego state reached by a random action prefix of length `depth`.
    fn start_state(ctx: &KernelContext, rng: &mut ChaCha8Rng, scenario: usize, depth: usize, ego: EgoState) -> EgoState {
        let mut e = ego;
        for k in 0..depth {
            e = simulate_macro_action(&ctx.model, &ctx.scenarios[scenario].frames, &e, rng.gen_range(0..9), k).ego;
        }
        e
    }

    #[test]
    fn expansion_and_rollout_match_scalar() {
        for (seed, layout) in [(1, Layout::Highway), (2, Layout::Crossing), (3, Layout::Crossing)] {
            let fx = fixture(30, layout, seed);
            let ctx = fx.ctx();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut kernel = BatchKernel::for_lanes(8);
            let (mut eo, mut ro) = (Vec::new(), Vec::new());
            for _ in 0..40 {
                let mut exp = vec![None; 8];
                let mut roll = vec![None; 8];
                for l in 0..8 {
                    if rng.gen_bool(0.25) {
                        continue;
                    }
                    let scenario = rng.gen_range(0..8);
                    let depth = rng.gen_range(0..=fx.params.depth);
                    let ego = start_state(&ctx, &mut rng, scenario, depth.min(fx.params.depth - 1), fx.ego);
                    let action = rng.gen_range(0..9);
                    if depth < fx.params.depth {
                        exp[l] = Some(ExpansionSlot { scenario, node: 0, action, depth, ego });
                    }
                    roll[l] = Some(RolloutSlot { scenario, action, depth, ego });
                }
                kernel.expand(&ctx, &exp, &mut eo);
                kernel.rollout(&ctx, &roll, &mut ro);
                for l in 0..8 {
                    let want = exp[l].map(|s| simulate_macro_action(&ctx.model, &fx.prepared[s.scenario].frames, &s.ego, s.action, s.depth));
                    assert_eq!(eo[l], want);
                    let want = roll[l].map(|s| scalar_rollout(&ctx.model, &fx.prepared[s.scenario].frames, &s.ego, s.action, s.depth));
                    assert_eq!(ro[l].map(f64::to_bits), want.map(f64::to_bits));
                }
            }
        }
    }

    #[test]
    fn identical_slots_give_identical_outputs() {
        let fx = fixture(15, Layout::Highway, 4);
        let ctx = fx.ctx();
        let slot = ExpansionSlot { scenario: 2, node: 0, action: 4, depth: 0, ego: fx.ego };
        let out = vectorized_expansion(&ctx, &[Some(slot); 8]);
        assert!(out.iter().all(|o| *o == out[0]));
    }

    #[test]
    fn horizon_slot_returns_zero() {
        let fx = fixture(5, Layout::Highway, 5);
        let ctx = fx.ctx();
        let out = vectorized_rollout(&ctx, &[Some(RolloutSlot { scenario: 0, action: 0, depth: fx.params.depth, ego: fx.ego }), None]);
        assert_eq!(out, vec![Some(0.0), None]);
    }

    #[test]
    fn free_road_rollout_is_geometric() {
        // ego alone at its desired speed: each level earns the same reward
        let road = Road::straight(2000.0, 3, 3.5).unwrap();
        let params = ModelParams::default();
        let actions = ActionSet::full(params.action_duration());
        let state = crate::model::belief::SceneState { ego: EgoState { x: 10.0, y: 0.0, heading: 0.0, speed: params.vehicle.idm.desired_speed }, agents: vec![] };
        let scenarios = sample_scenarios(&Default::default(), &state, &road, 1, 0, params.total_steps(), params.dt).unwrap();
        let prepared = vec![PreparedScenario::build(&road, &scenarios[0], &params, &SpatialParams::default())];
        let ctx = KernelContext { model: TransitionModel::new(&road, &actions, &params, &state.ego), scenarios: &prepared, margin: 0.1 };
        let level = 20.0 * params.dt * params.vehicle.idm.desired_speed;
        let gamma = params.reward.discount;
        let got = vectorized_rollout(&ctx, &[Some(RolloutSlot { scenario: 0, action: 1, depth: 0, ego: state.ego })])[0].unwrap();
        let want = level * (1.0 - gamma.powi(4)) / (1.0 - gamma);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn sequences_match_scalar_trace() {
        let fx = fixture(30, Layout::Crossing, 6);
        let ctx = fx.ctx();
        let mut kernel = BatchKernel::for_lanes(8);
        let mut out = Vec::new();
        let seq = [3, 0, 8, 4];
        let starts: Vec<Option<(usize, EgoState)>> = (0..8).map(|k| (k != 5).then_some((k, fx.ego))).collect();
        kernel.simulate_sequences(&ctx, &starts, &seq, &mut out);
        for (k, got) in out.iter().enumerate() {
            let want = (k != 5).then(|| simulate_sequence(&ctx.model, &fx.prepared[k].frames, &fx.ego, &seq).unwrap());
            assert_eq!(*got, want);
        }
    }
}
