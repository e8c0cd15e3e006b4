//! Drives a closed-loop episode: plan, refine, execute half a second, replan.
//!
//! cargo run --release --example closed_loop -- [density] [world-seed]

use std::time::Duration;

use qmdp_forest::harness::{generate_scene, run_episode, EpisodeConfig, Layout};
use qmdp_forest::search::SearchConfig;

fn main() -> qmdp_forest::Result<()> {
    let mut args = std::env::args().skip(1);
    let density = args.next().and_then(|a| a.parse().ok()).unwrap_or(15);
    let world_seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(1);

    let scene = generate_scene(density, Layout::Crossing, 3)?;
    let search = SearchConfig { scenarios: 16, workers: 1, time_budget: Some(Duration::from_millis(30)), ..SearchConfig::default() };
    let config = EpisodeConfig { search, duration: 8.0, world_seed, ..EpisodeConfig::default() };
    let result = run_episode(&scene, &config)?;

    for c in &result.cycles {
        println!("t = {:4.1} s  policy {:?}  {:6} edges  plan {:5.1} ms  refine {:5.1} ms", c.time, c.policy, c.total_edges, c.plan_ms, c.refine_ms);
    }
    let end = result.states.last().expect("episode records the start state");
    println!("final ego ({:.1}, {:.1}) at {:.1} m/s after {:.1} m", end.x, end.y, end.speed, result.progress);
    match result.collisions.first() {
        Some(c) => println!("collided with agent {} at step {}", c.agent, c.step),
        None => println!("no collision"),
    }
    Ok(())
}
