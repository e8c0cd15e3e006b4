use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::action::ActionSet;
use crate::model::transition::ModelParams;

/// Which descent rule picks frontier nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    /// Two-stage descent with the depth-alignment penalty.
    LoadBalanced,
    /// Single-stage UCB descent.
    PlainUcb,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub epsilon: f64,
    pub window: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Self { epsilon: 1e-3, window: 20 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialParams {
    pub branching: usize,
    pub leaf_capacity: usize,
    pub margin: f64,
}

impl Default for SpatialParams {
    fn default() -> Self {
        Self { branching: 8, leaf_capacity: 8, margin: 0.1 }
    }
}

/// Batch widths with a compiled lane kernel.
pub const SUPPORTED_WIDTHS: [usize; 5] = [1, 2, 4, 8, 16];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Scenario count `K`; must be a multiple of `batch_width`.
    pub scenarios: usize,
    /// Worker threads `M`.
    pub workers: usize,
    /// Trees per lockstep minibatch `W`.
    pub batch_width: usize,
    pub ucb_c: f64,
    pub lambda: f64,
    pub selection: SelectionRule,
    /// Wall-clock budget checked between iterations; `None` is unlimited.
    pub time_budget: Option<Duration>,
    /// Per-tree iteration cap, root expansion included; `None` is unlimited.
    pub iteration_budget: Option<usize>,
    pub convergence: Option<Convergence>,
    pub seed: u64,
    pub model: ModelParams,
    pub spatial: SpatialParams,
    /// Indices into the nine-action set, in order.
    pub actions: Vec<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            scenarios: 64,
            workers: 8,
            batch_width: 8,
            ucb_c: 1.4,
            lambda: 0.5,
            selection: SelectionRule::LoadBalanced,
            time_budget: Some(Duration::from_millis(100)),
            iteration_budget: None,
            convergence: Some(Convergence::default()),
            seed: 0,
            model: ModelParams::default(),
            spatial: SpatialParams::default(),
            actions: (0..9).collect(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.scenarios == 0 || self.workers == 0 || self.batch_width == 0 {
            return bad("scenario, worker and batch counts must be at least 1");
        }
        if !SUPPORTED_WIDTHS.contains(&self.batch_width) {
            return bad("batch width must be one of 1, 2, 4, 8, 16");
        }
        if self.scenarios % self.batch_width != 0 {
            return bad("scenario count must be a multiple of the batch width");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be a finite non-negative number");
        }
        if !(self.ucb_c >= 0.0) {
            return bad("ucb constant must be non-negative");
        }
        if self.model.depth == 0 {
            return bad("tree depth must be at least 1");
        }
        if let Some(c) = self.convergence {
            if c.window == 0 || !(c.epsilon > 0.0) {
                return bad("convergence window and epsilon must be positive");
            }
        }
        if self.spatial.branching < 2 || self.spatial.leaf_capacity == 0 || !(self.spatial.margin >= 0.0) {
            return bad("spatial index needs branching >= 2, leaf capacity >= 1 and a non-negative margin");
        }
        self.model.validate()?;
        self.action_set().map(|_| ())
    }

    pub fn action_set(&self) -> Result<ActionSet> {
        ActionSet::subset(self.model.action_duration(), &self.actions)
    }

    pub fn minibatches(&self) -> usize {
        self.scenarios / self.batch_width
    }
}
