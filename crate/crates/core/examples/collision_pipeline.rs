//! Broad phase then narrow phase on one frame of a dense scene, checked
//! against testing every agent directly.
//!
//! cargo run --release --example collision_pipeline

use qmdp_forest::harness::{generate_scene, Layout};
use qmdp_forest::model::belief::sample_scenarios;
use qmdp_forest::search::prepared::PreparedScenario;
use qmdp_forest::search::SearchConfig;
use qmdp_forest::spatial::aabb::frenet_aabb;
use qmdp_forest::spatial::obb::{sat_overlap, Obb};

fn main() -> qmdp_forest::Result<()> {
    let scene = generate_scene(120, Layout::Crossing, 9)?;
    let road = scene.build_road()?;
    let config = SearchConfig::default();
    let p = &config.model;
    let scenario = sample_scenarios(&scene.belief(), &scene.state(), &road, 1, 9, p.total_steps(), p.dt)?.remove(0);
    let prepared = PreparedScenario::build(&road, &scenario, p, &config.spatial);

    let frame = 10;
    let tree = prepared.tree_for_frame(frame);
    println!("frame {frame}: {} agents, STR height {}, {} nodes", tree.len(), tree.height(), tree.node_count());

    let obbs = prepared.frames.obbs(frame);
    let (mut candidates, mut hits) = (0, 0);
    for i in (0..obbs.len()).step_by(7) {
        let a = scenario.agent_at(i, frame);
        let grown = Obb { x: a.x, y: a.y, heading: a.heading, half_length: a.half_length + 6.0, half_width: a.half_width + 2.0 };
        let (query, _) = frenet_aabb(&grown, &road.centerline, config.spatial.margin);
        let near = tree.broad_phase_query(&query);
        let found: Vec<u32> = near.iter().copied().filter(|&j| j as usize != i && sat_overlap(&grown.frame(), &obbs[j as usize])).collect();
        let mut brute: Vec<u32> = (0..obbs.len() as u32).filter(|&j| j as usize != i && sat_overlap(&grown.frame(), &obbs[j as usize])).collect();
        let mut sorted = found.clone();
        sorted.sort_unstable();
        brute.sort_unstable();
        assert_eq!(sorted, brute, "broad phase dropped a colliding pair");
        candidates += near.len();
        hits += found.len();
    }
    println!("{candidates} broad-phase candidates, {hits} narrow-phase overlaps, all matching brute force");
    Ok(())
}
