use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub collision_penalty: f64,
    pub progress_weight: f64,
    pub comfort_weight: f64,
    pub discount: f64,
}

impl Default for RewardSpec {
    fn default() -> Self {
        Self { collision_penalty: -1000.0, progress_weight: 1.0, comfort_weight: 0.1, discount: 0.95 }
    }
}

impl RewardSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.collision_penalty < 0.0) {
            return Err(Error::InvalidConfig("collision penalty must be negative".into()));
        }
        if !(self.progress_weight >= 0.0 && self.comfort_weight >= 0.0) {
            return Err(Error::InvalidConfig("reward weights must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return Err(Error::InvalidConfig("discount must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-control-step reward. A collision is also terminal.
#[inline(always)]
pub fn step_reward(collision: bool, progress: f64, accel: f64, spec: &RewardSpec) -> f64 {
    let hit = if collision { spec.collision_penalty } else { 0.0 };
    hit + spec.progress_weight * progress - spec.comfort_weight * (accel * accel)
}

/// Discounted return of per-level rewards, folded from the last level.
#[inline]
pub fn discounted_return(rewards: &[f64], discount: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, &r| r + discount * acc)
}
