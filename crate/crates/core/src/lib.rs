//! Scenario-forest QMDP planning for dynamic multi-agent driving scenes.
//!
//! The planner samples `K` futures from a belief over agent intentions, grows
//! one flat, pre-allocated search tree per future, and advances batches of
//! trees in lockstep through a shared step-synchronous simulation kernel.
//! Collision checks go through a per-interval Frenet STR-tree broad phase and
//! a masked batch SAT narrow phase. Root values are averaged across the forest
//! (QMDP), and the resulting action sequence is refined by importance-sampled
//! cross-scenario trajectory evaluation.
//!
//! Module map:
//!
//! * [`model`]: vehicle dynamics, Frenet geometry, beliefs, rewards and the
//!   scalar transition used as the reference semantics.
//! * [`tree`]: structure-of-arrays scenario trees with implicit addressing.
//! * [`spatial`]: Frenet AABBs, STR bulk loading, batch SAT.
//! * [`search`]: the batched forest search and root aggregation.
//! * [`trajopt`]: importance resampling, candidate generation, block-diagonal
//!   cross evaluation and SNIS trajectory selection.
//! * [`harness`]: synthetic scenes, closed-loop episodes, the serial reference
//!   planner and the throughput benchmark.

pub mod error;
pub mod harness;
pub mod math;
pub mod model;
pub mod search;
pub mod spatial;
pub mod trajopt;
pub mod tree;

pub use error::{Error, Result};
