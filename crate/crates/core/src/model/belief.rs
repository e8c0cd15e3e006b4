//! Agents, intention beliefs and sampled scenarios.
//!
//! Each exogenous agent carries a small discrete distribution over
//! intentions. An intention deterministically generates a time-major
//! trajectory along the agent's route, so a scenario is fully described by the
//! chosen intention per agent.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::normalize_angle;
use crate::model::dynamics::EgoState;
use crate::model::geometry::{Road, Route};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub half_length: f64,
    pub half_width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IntentionKind {
    KeepLane { target_speed: f64 },
    Yield { decel: f64 },
    CutIn { target_d: f64, start_time: f64, duration: f64 },
    Cross { target_speed: f64 },
}

impl IntentionKind {
    /// Intentions that move into the ego corridor.
    pub fn is_hazardous(&self) -> bool {
        matches!(self, IntentionKind::CutIn { .. } | IntentionKind::Cross { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intention {
    pub id: u32,
    pub probability: f64,
    #[serde(flatten)]
    pub kind: IntentionKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentBelief {
    pub route: Route,
    pub intentions: Vec<Intention>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub agents: Vec<AgentBelief>,
}

impl Belief {
    pub fn validate(&self) -> Result<()> {
        for (j, a) in self.agents.iter().enumerate() {
            if a.intentions.is_empty() {
                return Err(Error::NoIntentions { agent: j });
            }
            let mut sum = 0.0;
            for it in &a.intentions {
                if !(it.probability >= 0.0) || !it.probability.is_finite() {
                    return Err(Error::InvalidBelief(format!("agent {j}: probability {} is invalid", it.probability)));
                }
                sum += it.probability;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidBelief(format!("agent {j}: probabilities sum to {sum}")));
            }
        }
        Ok(())
    }

    /// Per-agent intention probabilities.
    pub fn probabilities(&self) -> Vec<Vec<f64>> {
        self.agents.iter().map(|a| a.intentions.iter().map(|i| i.probability).collect()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneState {
    pub ego: EgoState,
    pub agents: Vec<AgentState>,
}

/// Agent states at control steps `1..=len`; the initial state is step 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<AgentState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Rolls out `kind` from `agent` along `route` for `steps` steps of `dt`.
pub fn generate_trajectory(agent: &AgentState, road: &Road, route: Route, kind: &IntentionKind, steps: usize, dt: f64) -> Trajectory {
    let path = road.route(route);
    let start = path.project(agent.x, agent.y);
    let mut s = start.s;
    let mut d = start.d;
    let d0 = start.d;
    let mut v = agent.speed;
    let mut states = Vec::with_capacity(steps);
    for k in 1..=steps {
        let t = k as f64 * dt;
        match *kind {
            IntentionKind::KeepLane { target_speed } => v += (target_speed - v).clamp(-dt, dt),
            IntentionKind::Yield { decel } => v = (v - decel * dt).max(0.0),
            IntentionKind::CutIn { .. } => {}
            IntentionKind::Cross { target_speed } => v += (target_speed - v).clamp(-1.5 * dt, 1.5 * dt),
        }
        let s_next = s + v * dt;
        let d_next = match *kind {
            IntentionKind::CutIn { target_d, start_time, duration } => {
                let frac = ((t - start_time) / duration).clamp(0.0, 1.0);
                d0 + (target_d - d0) * 0.5 * (1.0 - (std::f64::consts::PI * frac).cos())
            }
            _ => d0,
        };
        let (ds, dd) = (s_next - s, d_next - d);
        let rel = if ds == 0.0 && dd == 0.0 { 0.0 } else { dd.atan2(ds) };
        let heading = normalize_angle(path.heading_at(s_next) + rel);
        let (x, y) = path.point_at(s_next, d_next);
        states.push(AgentState { x, y, heading, speed: v, ..*agent });
        s = s_next;
        d = d_next;
    }
    Trajectory { states }
}

/// One sampled future: the start state plus a fixed trajectory per agent.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub id: usize,
    pub ego: EgoState,
    pub agents: Vec<AgentState>,
    pub trajectories: Vec<Arc<Trajectory>>,
    /// Chosen intention index per agent.
    pub intentions: Vec<usize>,
}

impl Scenario {
    /// State of agent `j` at control step `frame`; frame 0 is the start state.
    #[inline]
    pub fn agent_at(&self, j: usize, frame: usize) -> &AgentState {
        if frame == 0 {
            &self.agents[j]
        } else {
            &self.trajectories[j].states[frame - 1]
        }
    }

    pub fn frame_count(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.len()) + 1
    }
}

/// Trajectories for every (agent, intention), generated once and shared.
#[derive(Clone, Debug)]
pub struct TrajectoryLibrary {
    trajectories: Vec<Vec<Arc<Trajectory>>>,
}

impl TrajectoryLibrary {
    pub fn build(belief: &Belief, state: &SceneState, road: &Road, steps: usize, dt: f64) -> Result<Self> {
        belief.validate()?;
        if belief.agents.len() != state.agents.len() {
            return Err(Error::InvalidBelief(format!(
                "belief covers {} agents but the scene has {}",
                belief.agents.len(),
                state.agents.len()
            )));
        }
        let trajectories = belief
            .agents
            .iter()
            .zip(&state.agents)
            .map(|(ab, agent)| {
                ab.intentions
                    .iter()
                    .map(|it| Arc::new(generate_trajectory(agent, road, ab.route, &it.kind, steps, dt)))
                    .collect()
            })
            .collect();
        Ok(Self { trajectories })
    }

    pub fn get(&self, agent: usize, intention: usize) -> &Arc<Trajectory> {
        &self.trajectories[agent][intention]
    }
}

/// Index drawn from `probs` with a uniform variate `u` in `[0, 1)`.
#[inline]
pub fn draw_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Random stream dedicated to scenario `index` under `seed`.
pub fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Draws `count` scenarios with per-agent intention probabilities `probs`.
pub fn sample_from(library: &TrajectoryLibrary, state: &SceneState, probs: &[Vec<f64>], count: usize, seed: u64) -> Result<Vec<Scenario>> {
    if count == 0 {
        return Err(Error::NoScenarios);
    }
    Ok((0..count)
        .map(|k| {
            let mut rng = scenario_rng(seed, k);
            let intentions: Vec<usize> = probs.iter().map(|p| draw_index(p, rng.gen::<f64>())).collect();
            Scenario {
                id: k,
                ego: state.ego,
                agents: state.agents.clone(),
                trajectories: intentions.iter().enumerate().map(|(j, &i)| library.get(j, i).clone()).collect(),
                intentions,
            }
        })
        .collect())
}

/// Draws `count` scenarios from the belief.
pub fn sample_scenarios(
    belief: &Belief,
    state: &SceneState,
    road: &Road,
    count: usize,
    seed: u64,
    steps: usize,
    dt: f64,
) -> Result<Vec<Scenario>> {
    if count == 0 {
        return Err(Error::NoScenarios);
    }
    let library = TrajectoryLibrary::build(belief, state, road, steps, dt)?;
    sample_from(&library, state, &belief.probabilities(), count, seed)
}
