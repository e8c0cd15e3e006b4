use std::path::PathBuf;
use std::time::Duration;

use qmdp_forest::harness::{generate_scene, Layout, SceneSpec};
use qmdp_forest::search::{Planner, SearchConfig};
use qmdp_forest::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn config() -> SearchConfig {
    SearchConfig { scenarios: 8, workers: 1, batch_width: 4, time_budget: None, iteration_budget: Some(40), convergence: None, seed: 21, ..SearchConfig::default() }
}

/// Rewrites the frozen files when `UPDATE_GOLDEN` is set.
fn golden(name: &str, actual: &str) {
    let path = fixture(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing fixture {}", path.display()));
    assert_eq!(actual, expected, "{name} drifted");
}

#[test]
fn fixture_scene_matches_generator() {
    let scene = generate_scene(12, Layout::Crossing, 21).unwrap();
    golden("scene_crossing_12.json", &scene.to_json().unwrap());
    let loaded = SceneSpec::load(fixture("scene_crossing_12.json")).unwrap();
    assert_eq!(loaded, scene);
}

#[test]
fn tree_dump_is_frozen() {
    let scene = SceneSpec::load(fixture("scene_crossing_12.json")).unwrap();
    let road = scene.build_road().unwrap();
    let mut planner = Planner::new(config()).unwrap();
    let out = planner.plan(&road, &scene.belief(), &scene.state()).unwrap();
    let mut dump = format!("policy {:?}\n", out.policy);
    dump.push_str(&planner.trees()[0].dump());
    golden("tree_dump_crossing_12.txt", &dump);
}

#[test]
fn replanning_resets_trees() {
    let scene = SceneSpec::load(fixture("scene_crossing_12.json")).unwrap();
    let road = scene.build_road().unwrap();
    let mut planner = Planner::new(config()).unwrap();
    let first = planner.plan(&road, &scene.belief(), &scene.state()).unwrap();
    let dumps: Vec<String> = planner.trees().iter().map(|t| t.dump()).collect();
    // a different cycle in between leaves nothing behind
    planner.set_seed(99);
    planner.plan(&road, &scene.belief(), &scene.state()).unwrap();
    planner.set_seed(21);
    let again = planner.plan(&road, &scene.belief(), &scene.state()).unwrap();
    assert_eq!(first.policy, again.policy);
    assert_eq!(first.telemetry.expansions, again.telemetry.expansions);
    assert_eq!(dumps, planner.trees().iter().map(|t| t.dump()).collect::<Vec<_>>());
}

#[test]
fn newer_format_versions_are_rejected() {
    let text = std::fs::read_to_string(fixture("scene_crossing_12.json")).unwrap();
    let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 2", 1);
    assert!(matches!(SceneSpec::from_json(&bumped), Err(Error::SceneVersion(2))));
}

#[test]
fn time_budget_never_skips_root_expansion() {
    let scene = SceneSpec::load(fixture("scene_crossing_12.json")).unwrap();
    let road = scene.build_road().unwrap();
    let cfg = SearchConfig { time_budget: Some(Duration::ZERO), iteration_budget: None, ..config() };
    let out = qmdp_forest::search::plan(&road, &scene.belief(), &scene.state(), &cfg).unwrap();
    assert_eq!(out.telemetry.iterations, cfg.scenarios * 9);
    assert!(out.root.q.iter().all(|q| q.is_finite()));
}
