//! Scalar reference transition.
//!
//! A macro-action at tree depth `k` runs control steps `k * steps .. (k + 1) * steps`.
//! Step `f` reads agent frame `f` for leader and lane-change decisions and
//! checks collisions against frame `f + 1`. The batch kernel in
//! [`crate::search::kernel`] must reproduce these functions bit for bit, so it
//! calls the same per-lane helpers defined here.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cos, wrap_angle};
use crate::model::action::{ActionSet, MacroAction, PATH_COUNT};
use crate::model::belief::{AgentState, Scenario, Trajectory};
use crate::model::dynamics::{mobil_feasible, step_ego, EgoState, LaneNeighbors, Neighbor, VehicleParams};
use crate::model::geometry::{FrenetPoint, Road};
use crate::model::reward::{discounted_return, step_reward, RewardSpec};
use crate::spatial::obb::{sat_overlap, ObbFrame};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub vehicle: VehicleParams,
    pub reward: RewardSpec,
    /// Control timestep in seconds.
    pub dt: f64,
    pub steps_per_action: usize,
    /// Tree depth `H`; the horizon is `H * steps_per_action * dt` seconds.
    pub depth: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { vehicle: VehicleParams::default(), reward: RewardSpec::default(), dt: 0.1, steps_per_action: 20, depth: 4 }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.reward.validate()?;
        if !(self.dt > 0.0) || self.steps_per_action == 0 {
            return Err(Error::InvalidConfig("dt and steps per action must be positive".into()));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.depth * self.steps_per_action
    }

    pub fn action_duration(&self) -> f64 {
        self.steps_per_action as f64 * self.dt
    }
}

/// Target lane per candidate path: keep, one lane left, one lane right.
pub fn candidate_lanes(road: &Road, ego_lane: usize) -> [usize; PATH_COUNT] {
    [ego_lane, (ego_lane + 1).min(road.lane_count - 1), ego_lane.saturating_sub(1)]
}

/// Everything a transition needs besides the scenario.
#[derive(Clone, Copy, Debug)]
pub struct TransitionModel<'a> {
    pub road: &'a Road,
    pub actions: &'a ActionSet,
    pub params: &'a ModelParams,
    pub lanes: [usize; PATH_COUNT],
}

impl<'a> TransitionModel<'a> {
    /// Binds candidate paths to the ego's lane at the start of planning.
    pub fn new(road: &'a Road, actions: &'a ActionSet, params: &'a ModelParams, ego: &EgoState) -> Self {
        let lane = road.nearest_lane(road.centerline.project(ego.x, ego.y).d);
        Self { road, actions, params, lanes: candidate_lanes(road, lane) }
    }

    pub fn ego_frame(&self, ego: &EgoState) -> ObbFrame {
        let v = &self.params.vehicle;
        ObbFrame::new(ego.x, ego.y, ego.heading, v.half_length, v.half_width)
    }
}

/// Frenet quantities of one agent in the road frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AgentFrenet {
    pub s: f64,
    pub d: f64,
    pub along_speed: f64,
    pub rel_heading: f64,
    pub clamped: bool,
}

#[inline]
pub fn agent_frenet(road: &Road, x: f64, y: f64, heading: f64, speed: f64) -> AgentFrenet {
    let f = road.centerline.project(x, y);
    let rel = wrap_angle(heading - f.heading);
    AgentFrenet { s: f.s, d: f.d, along_speed: speed * cos(rel), rel_heading: rel, clamped: f.clamped }
}

/// Agent Frenet columns and footprints for every frame of one scenario,
/// frame-major (`frame * n + agent`).
#[derive(Clone, Debug)]
pub struct ScenarioFrames {
    pub agents: usize,
    pub frames: usize,
    pub s: Vec<f64>,
    pub d: Vec<f64>,
    pub along_speed: Vec<f64>,
    pub rel_heading: Vec<f64>,
    pub clamped: Vec<bool>,
    pub half_length: Vec<f64>,
    pub half_width: Vec<f64>,
    pub obb: Vec<ObbFrame>,
}

/// Borrowed view of one frame.
#[derive(Clone, Copy)]
pub struct AgentColumns<'a> {
    pub s: &'a [f64],
    pub d: &'a [f64],
    pub along_speed: &'a [f64],
    pub half_length: &'a [f64],
}

/// Frenet projections of shared agent trajectories, computed once per
/// trajectory and reused by every scenario that drew it.
#[derive(Debug, Default)]
pub struct FrenetCache {
    tracks: HashMap<usize, (Arc<Trajectory>, Vec<AgentFrenet>, Vec<ObbFrame>)>,
    start: Option<(Vec<AgentState>, Vec<AgentFrenet>)>,
}

impl FrenetCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn track(&mut self, road: &Road, trajectory: &Arc<Trajectory>) {
        let key = Arc::as_ptr(trajectory) as usize;
        self.tracks
            .entry(key)
            .or_insert_with(|| {
                let cols = trajectory.states.iter().map(|a| agent_frenet(road, a.x, a.y, a.heading, a.speed)).collect();
                let obbs = trajectory.states.iter().map(|a| ObbFrame::new(a.x, a.y, a.heading, a.half_length, a.half_width)).collect();
                (Arc::clone(trajectory), cols, obbs)
            });
    }

    /// Projections of the shared start states, recomputed when they change.
    fn start(&mut self, road: &Road, agents: &[AgentState]) -> &[AgentFrenet] {
        if self.start.as_ref().map_or(true, |(a, _)| a.as_slice() != agents) {
            let cols = agents.iter().map(|a| agent_frenet(road, a.x, a.y, a.heading, a.speed)).collect();
            self.start = Some((agents.to_vec(), cols));
        }
        &self.start.as_ref().expect("start projections were just stored").1
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }
}

impl ScenarioFrames {
    pub fn build(road: &Road, scenario: &Scenario) -> Self {
        Self::build_cached(road, scenario, &mut FrenetCache::new())
    }

    pub fn build_cached(road: &Road, scenario: &Scenario, cache: &mut FrenetCache) -> Self {
        let n = scenario.agents.len();
        let frames = scenario.frame_count();
        let mut out = ScenarioFrames {
            agents: n,
            frames,
            s: Vec::with_capacity(n * frames),
            d: Vec::with_capacity(n * frames),
            along_speed: Vec::with_capacity(n * frames),
            rel_heading: Vec::with_capacity(n * frames),
            clamped: Vec::with_capacity(n * frames),
            half_length: scenario.agents.iter().map(|a| a.half_length).collect(),
            half_width: scenario.agents.iter().map(|a| a.half_width).collect(),
            obb: Vec::with_capacity(n * frames),
        };
        for t in &scenario.trajectories {
            cache.track(road, t);
        }
        let start = cache.start(road, &scenario.agents).to_vec();
        let tracks: Vec<&(Arc<Trajectory>, Vec<AgentFrenet>, Vec<ObbFrame>)> = scenario.trajectories.iter().map(|t| &cache.tracks[&(Arc::as_ptr(t) as usize)]).collect();
        for f in 0..frames {
            for j in 0..n {
                let (fr, obb) = if f == 0 {
                    let a = &scenario.agents[j];
                    (start[j], ObbFrame::new(a.x, a.y, a.heading, a.half_length, a.half_width))
                } else {
                    (tracks[j].1[f - 1], tracks[j].2[f - 1])
                };
                out.s.push(fr.s);
                out.d.push(fr.d);
                out.along_speed.push(fr.along_speed);
                out.rel_heading.push(fr.rel_heading);
                out.clamped.push(fr.clamped);
                out.obb.push(obb);
            }
        }
        out
    }

    #[inline]
    pub fn columns(&self, frame: usize) -> AgentColumns<'_> {
        let r = frame * self.agents..(frame + 1) * self.agents;
        AgentColumns { s: &self.s[r.clone()], d: &self.d[r.clone()], along_speed: &self.along_speed[r], half_length: &self.half_length }
    }

    #[inline]
    pub fn obbs(&self, frame: usize) -> &[ObbFrame] {
        &self.obb[frame * self.agents..(frame + 1) * self.agents]
    }
}

/// Nearest agent ahead whose lateral offset lies within `band` of `d`.
#[inline]
pub fn find_leader(s: f64, d: f64, ego_half_length: f64, band: f64, cols: &AgentColumns) -> Neighbor {
    let mut best = Neighbor::ABSENT;
    for j in 0..cols.s.len() {
        if (cols.d[j] - d).abs() < band && cols.s[j] > s {
            let gap = cols.s[j] - s - ego_half_length - cols.half_length[j];
            if gap < best.gap {
                best = Neighbor { gap, speed: cols.along_speed[j] };
            }
        }
    }
    best
}

/// Leader and follower in the lane centred at `center`.
#[inline]
pub fn lane_neighbors(center: f64, band: f64, s: f64, ego_half_length: f64, cols: &AgentColumns) -> LaneNeighbors {
    let mut out = LaneNeighbors::EMPTY;
    for j in 0..cols.s.len() {
        if (cols.d[j] - center).abs() < band {
            if cols.s[j] > s {
                let gap = cols.s[j] - s - ego_half_length - cols.half_length[j];
                if gap < out.leader.gap {
                    out.leader = Neighbor { gap, speed: cols.along_speed[j] };
                }
            } else {
                let gap = s - cols.s[j] - ego_half_length - cols.half_length[j];
                if gap < out.follower.gap {
                    out.follower = Neighbor { gap, speed: cols.along_speed[j] };
                }
            }
        }
    }
    out
}

/// Lateral target for this step. A lane change toward the action's path is
/// taken only once MOBIL approves it; until then the ego holds its lane.
#[inline]
pub fn lateral_target(model: &TransitionModel, at: &FrenetPoint, ego_speed: f64, action: &MacroAction, committed: &mut bool, cols: &AgentColumns) -> f64 {
    let road = model.road;
    let occupied = road.nearest_lane(at.d);
    let target = model.lanes[action.path_id];
    if occupied == target || *committed {
        return road.lane_center(target) + action.nudge;
    }
    let vp = &model.params.vehicle;
    let band = 0.5 * road.lane_width;
    let current = lane_neighbors(road.lane_center(occupied), band, at.s, vp.half_length, cols);
    let next = lane_neighbors(road.lane_center(target), band, at.s, vp.half_length, cols);
    if mobil_feasible(ego_speed, 2.0 * vp.half_length, &current, &next, &vp.idm, &vp.mobil) {
        *committed = true;
        road.lane_center(target) + action.nudge
    } else {
        road.lane_center(occupied) + action.nudge
    }
}

/// Result of one control step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub ego: EgoState,
    pub at: FrenetPoint,
    pub accel: f64,
    pub reward: f64,
    pub collision: bool,
}

/// Brute-force collision test of `ego` against every agent footprint.
pub fn collides_brute_force(ego: &ObbFrame, agents: &[ObbFrame]) -> bool {
    agents.iter().any(|a| sat_overlap(ego, a))
}

/// Advances one control step reading agent frame `frame`.
pub fn scalar_step(
    model: &TransitionModel,
    frames: &ScenarioFrames,
    ego: &EgoState,
    at: &FrenetPoint,
    action: &MacroAction,
    committed: &mut bool,
    frame: usize,
) -> StepOutcome {
    let p = model.params;
    let cols = frames.columns(frame);
    let target_d = lateral_target(model, at, ego.speed, action, committed, &cols);
    let leader = find_leader(at.s, at.d, p.vehicle.half_length, 0.5 * model.road.lane_width, &cols);
    let st = step_ego(ego, at, target_d, leader, &p.vehicle, p.dt);
    let next = model.road.centerline.project(st.state.x, st.state.y);
    let collision = collides_brute_force(&model.ego_frame(&st.state), frames.obbs(frame + 1));
    let reward = step_reward(collision, next.s - at.s, st.accel, &p.reward);
    StepOutcome { ego: st.state, at: next, accel: st.accel, reward, collision }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroOutcome {
    pub ego: EgoState,
    pub reward: f64,
    pub terminal: bool,
    pub steps: usize,
}

/// Executes action `action` from tree depth `depth`, stopping at a collision.
pub fn simulate_macro_action(model: &TransitionModel, frames: &ScenarioFrames, ego: &EgoState, action: usize, depth: usize) -> MacroOutcome {
    let a = model.actions.get(action);
    let spa = model.params.steps_per_action;
    let mut ego = *ego;
    let mut at = model.road.centerline.project(ego.x, ego.y);
    let mut committed = false;
    let mut reward = 0.0;
    for j in 0..spa {
        let out = scalar_step(model, frames, &ego, &at, &a, &mut committed, depth * spa + j);
        reward += out.reward;
        ego = out.ego;
        at = out.at;
        if out.collision {
            return MacroOutcome { ego, reward, terminal: true, steps: j + 1 };
        }
    }
    MacroOutcome { ego, reward, terminal: false, steps: spa }
}

/// Discounted return of repeating `action` from depth `depth` to the horizon.
pub fn scalar_rollout(model: &TransitionModel, frames: &ScenarioFrames, ego: &EgoState, action: usize, depth: usize) -> f64 {
    let mut rewards = Vec::new();
    let mut ego = *ego;
    for k in depth..model.params.depth {
        let out = simulate_macro_action(model, frames, &ego, action, k);
        rewards.push(out.reward);
        ego = out.ego;
        if out.terminal {
            break;
        }
    }
    discounted_return(&rewards, model.params.reward.discount)
}

/// Ego trace under a fixed per-level action sequence. Dynamics continue after
/// a collision; `level_rewards` stop accumulating at the first one.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceTrace {
    /// Ego states after each control step.
    pub states: Vec<EgoState>,
    /// Arc length at the start and after each step.
    pub s: Vec<f64>,
    pub accel: Vec<f64>,
    pub level_rewards: Vec<f64>,
    pub first_collision: Option<usize>,
}

impl SequenceTrace {
    pub fn discounted_return(&self, discount: f64) -> f64 {
        discounted_return(&self.level_rewards, discount)
    }
}

/// Runs `actions[k]` at depth `k` for every level of the horizon.
pub fn simulate_sequence(model: &TransitionModel, frames: &ScenarioFrames, ego: &EgoState, actions: &[usize]) -> Result<SequenceTrace> {
    if actions.is_empty() {
        return Err(Error::EmptyActionSequence);
    }
    let spa = model.params.steps_per_action;
    let steps = actions.len() * spa;
    let mut trace = SequenceTrace {
        states: Vec::with_capacity(steps),
        s: Vec::with_capacity(steps + 1),
        accel: Vec::with_capacity(steps),
        level_rewards: Vec::with_capacity(actions.len()),
        first_collision: None,
    };
    let mut ego = *ego;
    let mut at = model.road.centerline.project(ego.x, ego.y);
    trace.s.push(at.s);
    for (k, &ai) in actions.iter().enumerate() {
        let a = model.actions.get(ai);
        let mut committed = false;
        at = model.road.centerline.project(ego.x, ego.y);
        let mut level = 0.0;
        for j in 0..spa {
            let f = k * spa + j;
            let out = scalar_step(model, frames, &ego, &at, &a, &mut committed, f);
            if trace.first_collision.is_none() {
                level += out.reward;
                if out.collision {
                    trace.first_collision = Some(f);
                }
            }
            ego = out.ego;
            at = out.at;
            trace.states.push(ego);
            trace.s.push(at.s);
            trace.accel.push(out.accel);
        }
        if trace.level_rewards.len() == k && (trace.first_collision.is_none() || trace.first_collision >= Some(k * spa)) {
            trace.level_rewards.push(level);
        }
    }
    Ok(trace)
}
