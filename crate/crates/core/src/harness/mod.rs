//! Synthetic scenes, closed-loop episodes, the serial reference planner and
//! throughput benchmarks.

pub mod bench;
pub mod episode;
pub mod reference;
pub mod scene;

pub use bench::{imbalance_suite, run_benchmark, run_suite_cycle, ImbalanceSuite, SuiteRecord, ThroughputRecord, Variant};
pub use episode::{run_episode, EpisodeConfig, EpisodeResult};
pub use reference::{serial_reference_plan, serial_reference_plan_scenarios};
pub use scene::{generate_scene, Layout, SceneSpec};
