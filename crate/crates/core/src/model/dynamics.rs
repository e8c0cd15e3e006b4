//! Closed-loop vehicle control: IDM longitudinal, Stanley lateral, MOBIL lane
//! change gating, and kinematic bicycle integration.
//!
//! Everything here is straight-line code over `f64` so the batch kernel can
//! call it per lane inside its lane loops and stay bit-identical to the scalar
//! transition.

use serde::{Deserialize, Serialize};

use crate::math::{atan, sin_cos, tan, wrap_angle};
use crate::model::geometry::{FrenetPoint, ReferencePath};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
    /// Emergency braking bound; the output is clamped to `[-max_decel, max_accel]`.
    pub max_decel: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            desired_speed: 13.9,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            exponent: 4.0,
            max_decel: 8.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StanleyParams {
    pub gain: f64,
    pub max_steer: f64,
    pub speed_floor: f64,
}

impl Default for StanleyParams {
    fn default() -> Self {
        Self { gain: 2.5, max_steer: 0.6, speed_floor: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilParams {
    pub politeness: f64,
    pub safe_decel: f64,
    pub threshold: f64,
}

impl Default for MobilParams {
    fn default() -> Self {
        Self { politeness: 0.3, safe_decel: 3.0, threshold: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub idm: IdmParams,
    pub stanley: StanleyParams,
    pub mobil: MobilParams,
    pub wheelbase: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            idm: IdmParams::default(),
            stanley: StanleyParams::default(),
            mobil: MobilParams::default(),
            wheelbase: 2.8,
            half_length: 2.4,
            half_width: 1.0,
        }
    }
}

/// Bumper-to-bumper gap and along-track speed of a neighbouring vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub gap: f64,
    pub speed: f64,
}

impl Neighbor {
    /// Encodes "no vehicle" as an infinitely distant one.
    pub const ABSENT: Neighbor = Neighbor { gap: f64::INFINITY, speed: 0.0 };

    pub fn is_present(&self) -> bool {
        self.gap.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaneNeighbors {
    pub leader: Neighbor,
    pub follower: Neighbor,
}

impl LaneNeighbors {
    pub const EMPTY: LaneNeighbors = LaneNeighbors { leader: Neighbor::ABSENT, follower: Neighbor::ABSENT };
}

#[inline(always)]
fn pow_exp(r: f64, e: f64) -> f64 {
    if e == 4.0 {
        let r2 = r * r;
        r2 * r2
    } else {
        r.powf(e)
    }
}

/// Intelligent Driver Model acceleration. An absent leader is an infinite gap.
#[inline(always)]
pub fn idm_acceleration(speed: f64, gap: f64, lead_speed: f64, p: &IdmParams) -> f64 {
    let free = pow_exp(speed / p.desired_speed, p.exponent);
    let dyn_gap = speed * p.time_headway + speed * (speed - lead_speed) / (2.0 * (p.max_accel * p.comfort_decel).sqrt());
    let dyn_gap = if dyn_gap > 0.0 { dyn_gap } else { 0.0 };
    let ratio = (p.min_gap + dyn_gap) / gap;
    let a = p.max_accel * (1.0 - free - ratio * ratio);
    let a = if a > p.max_accel { p.max_accel } else { a };
    let a = if a < -p.max_decel { -p.max_decel } else { a };
    if gap > 0.0 { a } else { -p.max_decel }
}

/// Stanley law from heading error and signed cross-track error (target minus current).
#[inline(always)]
pub fn stanley_control(heading_error: f64, cross_track: f64, speed: f64, p: &StanleyParams) -> f64 {
    let v = if speed > p.speed_floor { speed } else { p.speed_floor };
    let steer = heading_error + atan(p.gain * cross_track / v);
    let steer = if steer > p.max_steer { p.max_steer } else { steer };
    if steer < -p.max_steer { -p.max_steer } else { steer }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SteeringCommand {
    pub steer: f64,
    /// The ego lies beyond the path ends.
    pub clamped: bool,
}

/// Stanley steering that tracks `path` itself.
pub fn stanley_steering(ego: &EgoState, path: &ReferencePath, p: &StanleyParams) -> SteeringCommand {
    let f = path.project(ego.x, ego.y);
    SteeringCommand {
        steer: stanley_control(wrap_angle(f.heading - ego.heading), -f.d, ego.speed, p),
        clamped: f.clamped,
    }
}

/// MOBIL lane-change gate. Gaps are measured to the ego's bumpers.
pub fn mobil_feasible(
    ego_speed: f64,
    ego_length: f64,
    current: &LaneNeighbors,
    target: &LaneNeighbors,
    idm: &IdmParams,
    mobil: &MobilParams,
) -> bool {
    let a_ego = idm_acceleration(ego_speed, current.leader.gap, current.leader.speed, idm);
    let a_ego_new = idm_acceleration(ego_speed, target.leader.gap, target.leader.speed, idm);

    let mut gain = a_ego_new - a_ego;
    let mut safe = true;

    let nf = target.follower;
    if nf.is_present() {
        let closed_gap = nf.gap + ego_length + target.leader.gap;
        let before = idm_acceleration(nf.speed, closed_gap, target.leader.speed, idm);
        let after = idm_acceleration(nf.speed, nf.gap, ego_speed, idm);
        safe = after >= -mobil.safe_decel;
        gain += mobil.politeness * (after - before);
    }
    let of = current.follower;
    if of.is_present() {
        let before = idm_acceleration(of.speed, of.gap, ego_speed, idm);
        let opened_gap = of.gap + ego_length + current.leader.gap;
        let after = idm_acceleration(of.speed, opened_gap, current.leader.speed, idm);
        gain += mobil.politeness * (after - before);
    }
    safe && gain > -mobil.threshold
}

/// Kinematic bicycle update with the rear-axle speed clipped at zero.
#[inline(always)]
pub fn integrate_bicycle(ego: &EgoState, accel: f64, steer: f64, wheelbase: f64, dt: f64) -> EgoState {
    let v = ego.speed + accel * dt;
    let v = if v > 0.0 { v } else { 0.0 };
    let (s, c) = sin_cos(ego.heading);
    EgoState {
        x: ego.x + v * c * dt,
        y: ego.y + v * s * dt,
        heading: wrap_angle(ego.heading + v / wheelbase * tan(steer) * dt),
        speed: v,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EgoStep {
    pub state: EgoState,
    pub accel: f64,
    pub steer: f64,
}

/// One control step toward lateral offset `target_d` of the frame `at`, with
/// the current leader (or [`Neighbor::ABSENT`]).
#[inline(always)]
pub fn step_ego(ego: &EgoState, at: &FrenetPoint, target_d: f64, leader: Neighbor, vp: &VehicleParams, dt: f64) -> EgoStep {
    let accel = idm_acceleration(ego.speed, leader.gap, leader.speed, &vp.idm);
    let steer = stanley_control(wrap_angle(at.heading - ego.heading), target_d - at.d, ego.speed, &vp.stanley);
    EgoStep { state: integrate_bicycle(ego, accel, steer, vp.wheelbase, dt), accel, steer }
}
