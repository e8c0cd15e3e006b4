//! Refines a fixed action sequence: picks hazard-critical agents, tilts their
//! intentions, resamples, cross-evaluates candidates and reports the winner.
//!
//! cargo run --release --example trajectory_refine

use qmdp_forest::harness::{generate_scene, Layout};
use qmdp_forest::search::SearchConfig;
use qmdp_forest::trajopt::{refine, RefineParams};

fn main() -> qmdp_forest::Result<()> {
    let scene = generate_scene(25, Layout::Crossing, 5)?;
    let road = scene.build_road()?;
    let config = SearchConfig { scenarios: 32, workers: 2, batch_width: 8, seed: 5, ..SearchConfig::default() };
    let policy = [1, 1, 1, 1];

    for tilt in [0.0, 0.5, 0.8] {
        let out = refine(&road, &scene.belief(), &scene.state(), &policy, &config, &RefineParams { tilt, ..RefineParams::default() })?;
        let weights: Vec<f64> = out.weights.iter().flatten().copied().collect();
        let (lo, hi) = weights.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &w| (lo.min(w), hi.max(w)));
        println!(
            "tilt {tilt:.1}: {} critical agents, weights in [{lo:.3}, {hi:.3}], winner scenario {} block {} score {:.3}, {:.1} ms",
            out.critical.len(),
            out.trajectory.scenario,
            out.selection.block,
            out.selection.score,
            out.wall_ms
        );
    }
    Ok(())
}
