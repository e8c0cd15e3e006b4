//! Batched forest search over sampled scenarios.

pub mod config;
pub mod kernel;
pub mod planner;
pub mod prepared;
pub mod root;
pub mod select;
pub mod telemetry;

pub use config::{Convergence, SearchConfig, SelectionRule, SpatialParams};
pub use kernel::{vectorized_expansion, vectorized_rollout, BatchKernel, ExpansionSlot, KernelContext, RolloutSlot};
pub use planner::{plan, PlanOutput, Planner};
pub use root::{aggregate_root, check_convergence, imbalance_metric, RootStatistics};
pub use select::{lb_ucb_score, traverse_select};
pub use telemetry::{ExpansionRecord, IterationRecord, SearchTelemetry};
