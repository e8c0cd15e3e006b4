//! Scene state, beliefs, macro-actions, vehicle control and reward.

pub mod action;
pub mod belief;
pub mod dynamics;
pub mod geometry;
pub mod reward;
pub mod transition;

pub use action::{ActionSet, MacroAction};
pub use belief::{
    generate_trajectory, sample_from, sample_scenarios, AgentBelief, AgentState, Belief, Intention, IntentionKind, Scenario,
    SceneState, Trajectory, TrajectoryLibrary,
};
pub use dynamics::{
    idm_acceleration, integrate_bicycle, mobil_feasible, stanley_control, stanley_steering, step_ego, EgoState, IdmParams,
    LaneNeighbors, MobilParams, Neighbor, StanleyParams, VehicleParams,
};
pub use geometry::{frenet_project, FrenetPoint, ReferencePath, Road, Route};
pub use reward::{discounted_return, step_reward, RewardSpec};
pub use transition::{ModelParams, ScenarioFrames, TransitionModel};
