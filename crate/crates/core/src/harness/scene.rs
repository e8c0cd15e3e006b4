//! Synthetic scenes and their JSON file format.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::belief::{AgentBelief, AgentState, Belief, Intention, IntentionKind, SceneState};
use crate::model::dynamics::EgoState;
use crate::model::geometry::{ReferencePath, Road, Route};
use crate::spatial::obb::{sat_overlap, ObbFrame};

pub const SCENE_FORMAT_VERSION: u32 = 1;

const PLACEMENT_ATTEMPTS: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Highway,
    Crossing,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "highway" => Ok(Layout::Highway),
            "crossing" => Ok(Layout::Crossing),
            _ => Err(Error::InvalidConfig(format!("unknown layout {s:?}; expected highway or crossing"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub lane_count: usize,
    pub lane_width: f64,
    pub length: f64,
    /// Longitudinal position of a perpendicular crossing road.
    pub crossing_x: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub state: AgentState,
    pub route: Route,
    pub intentions: Vec<Intention>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub format_version: u32,
    pub seed: u64,
    pub layout: Layout,
    pub road: RoadSpec,
    pub ego: EgoState,
    /// Arc length the ego is driving towards.
    pub goal_s: f64,
    pub agents: Vec<AgentSpec>,
}

/// Extent of the crossing road on either side of the main road.
const CROSSING_REACH: f64 = 120.0;

impl SceneSpec {
    pub fn build_road(&self) -> Result<Road> {
        let r = &self.road;
        let centerline = ReferencePath::straight((0.0, 0.0), 0.0, r.length, 5.0)?;
        let crossing = match r.crossing_x {
            Some(x) => Some(ReferencePath::straight((x, -CROSSING_REACH), std::f64::consts::FRAC_PI_2, 2.0 * CROSSING_REACH, 5.0)?),
            None => None,
        };
        Road::new(centerline, r.lane_count, r.lane_width, crossing)
    }

    pub fn belief(&self) -> Belief {
        Belief { agents: self.agents.iter().map(|a| AgentBelief { route: a.route, intentions: a.intentions.clone() }).collect() }
    }

    pub fn state(&self) -> SceneState {
        SceneState { ego: self.ego, agents: self.agents.iter().map(|a| a.state).collect() }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = serde_json::from_str(text)?;
        if v.format_version != SCENE_FORMAT_VERSION {
            return Err(Error::SceneVersion(v.format_version));
        }
        let scene: SceneSpec = serde_json::from_str(text)?;
        scene.belief().validate()?;
        Ok(scene)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

fn clearance_frame(s: &AgentState) -> ObbFrame {
    ObbFrame::new(s.x, s.y, s.heading, s.half_length + 2.0, s.half_width + 0.3)
}

/// Random intention mix whose probabilities sum to one.
fn probabilities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut p: Vec<f64> = w.iter().map(|x| x / total).collect();
    let head: f64 = p[..n - 1].iter().sum();
    p[n - 1] = 1.0 - head;
    p
}

fn main_intentions(rng: &mut ChaCha8Rng, road: &Road, lane: usize, speed: f64) -> Vec<IntentionKind> {
    let n = rng.gen_range(1..=3);
    let mut kinds = vec![IntentionKind::KeepLane { target_speed: (speed + rng.gen_range(-2.0..2.0)).max(0.0) }];
    let neighbours: Vec<usize> = [lane.checked_sub(1), (lane + 1 < road.lane_count).then_some(lane + 1)].into_iter().flatten().collect();
    if n >= 2 {
        kinds.push(match neighbours.is_empty() {
            true => IntentionKind::Yield { decel: rng.gen_range(1.0..3.0) },
            false => IntentionKind::CutIn {
                target_d: road.lane_center(neighbours[rng.gen_range(0..neighbours.len())]),
                start_time: rng.gen_range(0.5..3.0),
                duration: rng.gen_range(2.0..4.0),
            },
        });
    }
    if n >= 3 {
        kinds.push(IntentionKind::Yield { decel: rng.gen_range(1.0..3.0) });
    }
    kinds
}

/// Deterministic scene with `density` agents placed without overlap.
pub fn generate_scene(density: usize, layout: Layout, seed: u64) -> Result<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lanes = 3;
    let lane_width = 3.5;
    let ego_x = 30.0;
    let span = (8.0 * density as f64).clamp(300.0, 1200.0);
    let length = ego_x + span + 400.0;
    let crossing_x = (layout == Layout::Crossing).then_some(ego_x + 120.0);
    let road_spec = RoadSpec { lane_count: lanes, lane_width, length, crossing_x };
    let mut scene = SceneSpec {
        format_version: SCENE_FORMAT_VERSION,
        seed,
        layout,
        road: road_spec,
        ego: EgoState { x: ego_x, y: 0.0, heading: 0.0, speed: 12.0 },
        goal_s: length - 50.0,
        agents: Vec::with_capacity(density),
    };
    let road = scene.build_road()?;
    scene.ego.y = road.lane_center(1);
    let ego_box = AgentState { x: scene.ego.x, y: scene.ego.y, heading: 0.0, speed: 0.0, half_length: 2.4, half_width: 1.0 };
    let mut placed = vec![clearance_frame(&ego_box)];

    for _ in 0..density {
        let mut done = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let crossing = crossing_x.is_some() && rng.gen_bool(0.3);
            let half_length = rng.gen_range(2.0..2.6);
            let half_width = rng.gen_range(0.85..1.0);
            let (state, route, kinds) = if let Some(cx) = crossing_x.filter(|_| crossing) {
                let y = rng.gen_range(-90.0..-15.0);
                let speed = rng.gen_range(6.0..11.0);
                let state = AgentState { x: cx, y, heading: std::f64::consts::FRAC_PI_2, speed, half_length, half_width };
                let mut kinds = vec![IntentionKind::Cross { target_speed: speed + rng.gen_range(-1.0..2.0) }];
                if rng.gen_bool(0.6) {
                    kinds.push(IntentionKind::Yield { decel: rng.gen_range(1.5..4.0) });
                }
                (state, Route::Crossing, kinds)
            } else {
                let lane = rng.gen_range(0..lanes);
                let x = rng.gen_range(ego_x - 25.0..ego_x + span);
                let speed = rng.gen_range(6.0..16.0);
                let state = AgentState { x, y: road.lane_center(lane), heading: 0.0, speed, half_length, half_width };
                (state, Route::Main, main_intentions(&mut rng, &road, lane, speed))
            };
            let frame = clearance_frame(&state);
            if placed.iter().any(|p| sat_overlap(p, &frame)) {
                continue;
            }
            placed.push(frame);
            let probs = probabilities(&mut rng, kinds.len());
            let intentions = kinds.into_iter().zip(probs).enumerate().map(|(i, (kind, probability))| Intention { id: i as u32, probability, kind }).collect();
            scene.agents.push(AgentSpec { state, route, intentions });
            done = true;
            break;
        }
        if !done {
            return Err(Error::SceneTooDense { placed: scene.agents.len(), requested: density });
        }
    }
    Ok(scene)
}
