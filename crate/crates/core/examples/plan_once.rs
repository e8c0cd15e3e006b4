//! Plans a single cycle on a synthetic crossing scene and prints the root
//! values, the extracted policy and the search telemetry.
//!
//! cargo run --release --example plan_once -- [density] [seed]

use std::time::Duration;

use qmdp_forest::harness::{generate_scene, Layout};
use qmdp_forest::search::{plan, SearchConfig};

fn main() -> qmdp_forest::Result<()> {
    let mut args = std::env::args().skip(1);
    let density = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let seed = args.next().and_then(|a| a.parse().ok()).unwrap_or(7);

    let scene = generate_scene(density, Layout::Crossing, seed)?;
    let road = scene.build_road()?;
    let config = SearchConfig { scenarios: 32, workers: 1, time_budget: Some(Duration::from_millis(80)), seed, ..SearchConfig::default() };
    let out = plan(&road, &scene.belief(), &scene.state(), &config)?;

    println!("scene: {} agents, ego at ({:.1}, {:.1}) going {:.1} m/s", scene.agents.len(), scene.ego.x, scene.ego.y, scene.ego.speed);
    for (a, q) in out.root.q.iter().enumerate() {
        let mark = if a == out.root.best_action { "*" } else { " " };
        println!("{mark} action {a}: Q = {q:.3}");
    }
    println!("policy: {:?}", out.policy);
    let t = &out.telemetry;
    println!("{} tree iterations, {} edges in {:.1} ms ({:.1} edges/ms)", t.iterations, t.total_edges, t.wall_ms, t.edges_per_ms);
    Ok(())
}
