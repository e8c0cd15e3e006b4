//! One PASS/FAIL/SKIP line per acceptance criterion, written straight to the
//! process stdout so it shows up without `--nocapture`.

use std::io::Write;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qmdp_forest::harness::bench::pooled_edges_per_ms;
use qmdp_forest::harness::{generate_scene, run_episode, run_suite_cycle, serial_reference_plan, SuiteRecord, EpisodeConfig, Layout, SceneSpec};
use qmdp_forest::model::belief::{sample_scenarios, AgentBelief, AgentState, Belief, Intention, IntentionKind, SceneState, TrajectoryLibrary};
use qmdp_forest::model::dynamics::EgoState;
use qmdp_forest::model::geometry::{Road, Route};
use qmdp_forest::model::transition::{collides_brute_force, scalar_rollout, simulate_macro_action, simulate_sequence, ScenarioFrames, TransitionModel};
use qmdp_forest::search::prepared::PreparedScenario;
use qmdp_forest::search::root::root_returns;
use qmdp_forest::search::{aggregate_root, imbalance_metric, plan, BatchKernel, ExpansionSlot, KernelContext, Planner, RolloutSlot, SearchConfig, SelectionRule};
use qmdp_forest::spatial::aabb::aabb_from_center;
use qmdp_forest::spatial::obb::{sat_overlap, ObbFrame};
use qmdp_forest::trajopt::{build_proposal, resample_with_proposal, snis_value};
use qmdp_forest::tree::{child_index, tree_capacity};

const ROOT_TOLERANCE: f64 = 1e-12;
const WORKER_SPEEDUP: f64 = 5.0;
const WIDTH_SPEEDUP: f64 = 1.5;
const SUITE_IMBALANCE: f64 = 0.9;
const SUITE_GAIN: f64 = 1.05;
const SNIS_STANDARD_ERRORS: f64 = 3.0;
const FREE_FLOW_SHARE: f64 = 0.9;
/// Repeats per timed cycle; the fastest wall time is kept.
const TIMING_REPEATS: usize = 3;
const SUITE_REPEATS: usize = 5;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn budgeted(k: usize, m: usize, w: usize, iters: usize, seed: u64) -> SearchConfig {
    SearchConfig { scenarios: k, workers: m, batch_width: w, time_budget: None, iteration_budget: Some(iters), convergence: None, seed, ..SearchConfig::default() }
}

fn scene(density: usize, layout: Layout, seed: u64) -> (SceneSpec, Road) {
    let s = generate_scene(density, layout, seed).expect("scene generation");
    let r = s.build_road().expect("road");
    (s, r)
}

fn c01_single_lane_is_serial() -> Outcome {
    let mut runs = 0;
    for density in [5, 30] {
        for seed in 0..50u64 {
            let layout = if seed % 2 == 0 { Layout::Highway } else { Layout::Crossing };
            let (s, road) = scene(density, layout, seed);
            let cfg = SearchConfig { convergence: Some(Default::default()), ..budgeted(4, 1, 1, 30, seed) };
            let got = plan(&road, &s.belief(), &s.state(), &cfg).unwrap();
            let want = serial_reference_plan(&road, &s.belief(), &s.state(), &cfg).unwrap();
            let same_q = got.root.q.iter().zip(&want.root.q).all(|(a, b)| a.to_bits() == b.to_bits());
            if got.policy != want.policy || !same_q || got.telemetry.expansions != want.telemetry.expansions {
                return Outcome::Fail(format!("density {density} seed {seed} differs"));
            }
            runs += 1;
        }
    }
    Outcome::Pass(format!("{runs} plans bit-identical"))
}

fn c02_exhaustive_optimality() -> Outcome {
    let mut cases = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = rng.gen_range(2..=3);
        let h = rng.gen_range(2..=3);
        let mut actions: Vec<usize> = (0..9).collect();
        for i in 0..b {
            let j = rng.gen_range(i..9);
            actions.swap(i, j);
        }
        actions.truncate(b);
        let (s, road) = scene(rng.gen_range(5..40), Layout::Crossing, seed);
        let mut cfg = budgeted(1, 1, 1, 0, seed);
        cfg.iteration_budget = None;
        cfg.actions = actions;
        cfg.model.depth = h;
        let out = plan(&road, &s.belief(), &s.state(), &cfg).unwrap();
        let set = cfg.action_set().unwrap();
        let model = TransitionModel::new(&road, &set, &cfg.model, &s.ego);
        let sc = sample_scenarios(&s.belief(), &s.state(), &road, 1, seed, cfg.model.total_steps(), cfg.model.dt).unwrap();
        let frames = ScenarioFrames::build(&road, &sc[0]);
        let value = |seq: &[usize]| simulate_sequence(&model, &frames, &s.ego, seq).unwrap().discounted_return(cfg.model.reward.discount);
        let best = (0..b.pow(h as u32))
            .map(|mut code| {
                let mut seq = vec![0; h];
                for a in seq.iter_mut().rev() {
                    *a = code % b;
                    code /= b;
                }
                value(&seq)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if value(&out.policy) != best {
            return Outcome::Fail(format!("seed {seed}: policy value {} vs best {best}", value(&out.policy)));
        }
        cases += 1;
    }
    Outcome::Pass(format!("{cases} exhaustive cases match brute force exactly"))
}

fn c03_root_aggregation() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10u64 {
        let (s, road) = scene(20, Layout::Crossing, seed);
        let mut planner = Planner::new(budgeted(16, 1, 8, 40, seed)).unwrap();
        let out = planner.plan(&road, &s.belief(), &s.state()).unwrap();
        let returns: Vec<Vec<Option<f64>>> = planner.trees().iter().map(root_returns).collect();
        let agg = aggregate_root(&returns).unwrap();
        for a in 0..out.root.q.len() {
            let vals: Vec<f64> = planner.trees().iter().map(|t| t.best_return(0, a)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            worst = worst.max((mean - out.root.q[a]).abs()).max((agg.q[a] - out.root.q[a]).abs());
        }
    }
    check(worst <= ROOT_TOLERANCE, format!("max deviation {worst:.3e} (tolerance {ROOT_TOLERANCE:.0e})"))
}

/// Closed convex quads overlap iff an edge pair crosses or a vertex lies inside the other.
fn polygons_overlap(a: &[(f64, f64); 4], b: &[(f64, f64); 4]) -> bool {
    fn cross(o: (f64, f64), p: (f64, f64), q: (f64, f64)) -> f64 {
        (p.0 - o.0) * (q.1 - o.1) - (p.1 - o.1) * (q.0 - o.0)
    }
    fn inside(p: (f64, f64), poly: &[(f64, f64); 4]) -> bool {
        let signs: Vec<f64> = (0..4).map(|i| cross(poly[i], poly[(i + 1) % 4], p)).collect();
        signs.iter().all(|&s| s >= 0.0) || signs.iter().all(|&s| s <= 0.0)
    }
    fn segments_cross(p1: (f64, f64), p2: (f64, f64), q1: (f64, f64), q2: (f64, f64)) -> bool {
        let d1 = cross(q1, q2, p1);
        let d2 = cross(q1, q2, p2);
        let d3 = cross(p1, p2, q1);
        let d4 = cross(p1, p2, q2);
        d1 * d2 <= 0.0 && d3 * d4 <= 0.0
    }
    for i in 0..4 {
        for j in 0..4 {
            if segments_cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4]) {
                return true;
            }
        }
    }
    inside(a[0], b) || inside(b[0], a)
}

fn c04_collision_pipeline() -> Outcome {
    let model = qmdp_forest::model::transition::ModelParams::default();
    let spatial = qmdp_forest::search::SpatialParams::default();
    let vp = model.vehicle;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut queries = 0;
    let mut hits = 0;
    for i in 0..1000u64 {
        let density = rng.gen_range(0..=200);
        let layout = if i % 2 == 0 { Layout::Highway } else { Layout::Crossing };
        let (s, road) = scene(density, layout, i);
        let sc = sample_scenarios(&s.belief(), &s.state(), &road, 1, i, model.total_steps(), model.dt).unwrap();
        let prep = PreparedScenario::build(&road, &sc[0], &model, &spatial);
        for _ in 0..4 {
            let frame = rng.gen_range(1..=model.total_steps());
            let obbs = prep.frames.obbs(frame);
            let (x, y) = match obbs.len() {
                0 => (rng.gen_range(0.0..300.0), rng.gen_range(-6.0..6.0)),
                n => {
                    let a = &obbs[rng.gen_range(0..n)];
                    (a.cx + rng.gen_range(-6.0..6.0), a.cy + rng.gen_range(-3.0..3.0))
                }
            };
            let heading = rng.gen_range(-0.6..0.6);
            let ego = ObbFrame::new(x, y, heading, vp.half_length, vp.half_width);
            let at = road.centerline.project(x, y);
            let q = if at.clamped {
                qmdp_forest::spatial::aabb::Aabb::EVERYTHING
            } else {
                aabb_from_center(at.s, at.d, heading - at.heading, vp.half_length, vp.half_width, spatial.margin)
            };
            let two_phase = prep.tree_for_frame(frame).broad_phase_query(&q).iter().any(|&j| sat_overlap(&ego, &obbs[j as usize]));
            let brute = collides_brute_force(&ego, obbs);
            if two_phase != brute {
                return Outcome::Fail(format!("scene {i} frame {frame}: two-phase {two_phase}, brute force {brute}"));
            }
            hits += brute as usize;
            queries += 1;
        }
    }
    let mut agree = 0;
    for _ in 0..10_000 {
        let a = ObbFrame::new(0.0, 0.0, rng.gen_range(-3.2..3.2), rng.gen_range(0.5..3.0), rng.gen_range(0.3..1.5));
        let b = ObbFrame::new(rng.gen_range(-6.0..6.0), rng.gen_range(-6.0..6.0), rng.gen_range(-3.2..3.2), rng.gen_range(0.5..3.0), rng.gen_range(0.3..1.5));
        if sat_overlap(&a, &b) != polygons_overlap(&a.corners(), &b.corners()) {
            return Outcome::Fail("SAT disagrees with the polygon oracle".into());
        }
        agree += 1;
    }
    Outcome::Pass(format!("1000 scenes, {queries} queries ({hits} hits) match brute force; {agree} SAT pairs match polygons"))
}

fn c05_kernel_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = SearchConfig::default();
    let p = cfg.model;
    let actions = cfg.action_set().unwrap();
    let mut lanes = 0;
    for batch in 0..1000u64 {
        let (s, road) = scene(rng.gen_range(0..60), if batch % 2 == 0 { Layout::Crossing } else { Layout::Highway }, batch / 50);
        let width = [1, 2, 4, 8, 16][rng.gen_range(0..5)];
        let sc = sample_scenarios(&s.belief(), &s.state(), &road, width, batch, p.total_steps(), p.dt).unwrap();
        let prepared: Vec<PreparedScenario> = sc.iter().map(|x| PreparedScenario::build(&road, x, &p, &cfg.spatial)).collect();
        let frames: Vec<ScenarioFrames> = sc.iter().map(|x| ScenarioFrames::build(&road, x)).collect();
        let model = TransitionModel::new(&road, &actions, &p, &s.ego);
        let ctx = KernelContext { model, scenarios: &prepared, margin: cfg.spatial.margin };
        let mut kernel = BatchKernel::for_lanes(width);
        let ego = |rng: &mut ChaCha8Rng| EgoState {
            x: s.ego.x + rng.gen_range(0.0..40.0),
            y: road.lane_center(rng.gen_range(0..3)) + rng.gen_range(-1.0..1.0),
            heading: rng.gen_range(-0.2..0.2),
            speed: rng.gen_range(0.0..16.0),
        };
        let exp: Vec<Option<ExpansionSlot>> = (0..width)
            .map(|l| rng.gen_bool(0.75).then(|| ExpansionSlot { scenario: l, node: 0, action: rng.gen_range(0..9), depth: rng.gen_range(0..p.depth), ego: ego(&mut rng) }))
            .collect();
        let mut out = Vec::new();
        kernel.expand(&ctx, &exp, &mut out);
        for (l, slot) in exp.iter().enumerate() {
            let want = slot.map(|x| simulate_macro_action(&model, &frames[l], &x.ego, x.action, x.depth));
            if out[l] != want {
                return Outcome::Fail(format!("batch {batch} lane {l}: expansion differs"));
            }
        }
        let roll: Vec<Option<RolloutSlot>> = (0..width)
            .map(|l| rng.gen_bool(0.75).then(|| RolloutSlot { scenario: l, action: rng.gen_range(0..9), depth: rng.gen_range(1..p.depth), ego: ego(&mut rng) }))
            .collect();
        let mut values = Vec::new();
        kernel.rollout(&ctx, &roll, &mut values);
        for (l, slot) in roll.iter().enumerate() {
            let want = slot.map(|x| scalar_rollout(&model, &frames[l], &x.ego, x.action, x.depth).to_bits());
            if values[l].map(f64::to_bits) != want {
                return Outcome::Fail(format!("batch {batch} lane {l}: rollout differs"));
            }
        }
        lanes += width;
    }
    Outcome::Pass(format!("1000 masked batches ({lanes} lanes) bit-identical to the scalar transition"))
}

/// Pooled edges per millisecond of two configurations over `cycles` density-30
/// scenes; their runs alternate so machine drift hits both alike.
fn paired_throughput(first: (usize, usize), second: (usize, usize), cycles: u64) -> (f64, f64) {
    let mut edges = [0u64; 2];
    let mut wall = [0.0; 2];
    for cycle in 0..cycles {
        let (s, road) = scene(30, Layout::Crossing, cycle);
        let mut planners: Vec<Planner> = [first, second]
            .iter()
            .map(|&(workers, batch_width)| {
                let cfg = SearchConfig { scenarios: 64, workers, batch_width, time_budget: Some(Duration::from_millis(100)), convergence: None, seed: cycle, ..SearchConfig::default() };
                Planner::new(cfg).unwrap()
            })
            .collect();
        let mut best: [Option<(u64, f64)>; 2] = [None, None];
        for _ in 0..TIMING_REPEATS {
            for (i, planner) in planners.iter_mut().enumerate() {
                let t = planner.plan(&road, &s.belief(), &s.state()).unwrap().telemetry;
                if best[i].map_or(true, |(e, w)| t.edges_per_ms > e as f64 / w) {
                    best[i] = Some((t.total_edges, t.wall_ms));
                }
            }
        }
        for i in 0..2 {
            let (e, w) = best[i].unwrap();
            edges[i] += e;
            wall[i] += w;
        }
    }
    (edges[0] as f64 / wall[0], edges[1] as f64 / wall[1])
}

fn c06_worker_scaling() -> Outcome {
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (many, one) = paired_throughput((8, 8), (1, 8), 3);
    let ratio = many / one;
    if cores < 8 {
        return Outcome::Skip(format!("{cores} core(s) available; measured M=8/M=1 ratio {ratio:.2} (needs {WORKER_SPEEDUP}x on 8 cores)"));
    }
    check(ratio >= WORKER_SPEEDUP, format!("M=8/M=1 edges/ms ratio {ratio:.2} (needs {WORKER_SPEEDUP})"))
}

fn c07_width_scaling() -> Outcome {
    let (wide, narrow) = paired_throughput((1, 8), (1, 1), 10);
    let ratio = wide / narrow;
    check(ratio >= WIDTH_SPEEDUP, format!("W=8 {wide:.1} vs W=1 {narrow:.1} edges/ms at density 30, ratio {ratio:.2} (needs {WIDTH_SPEEDUP})"))
}

fn c08_load_balancing_suite() -> Outcome {
    let (mut zero, mut half) = (Vec::new(), Vec::new());
    for cycle in 0..20 {
        // alternate the two weights so machine drift hits both alike
        let mut best: [Option<SuiteRecord>; 2] = [None, None];
        for _ in 0..SUITE_REPEATS {
            for (slot, lambda) in best.iter_mut().zip([0.0, 0.5]) {
                let r = run_suite_cycle(cycle, lambda, SelectionRule::LoadBalanced, 1).unwrap();
                if slot.map_or(true, |b| r.wall_ms < b.wall_ms) {
                    *slot = Some(r);
                }
            }
        }
        zero.push(best[0].unwrap());
        half.push(best[1].unwrap());
    }
    let mean = |v: &[SuiteRecord], f: fn(&SuiteRecord) -> f64| v.iter().map(f).sum::<f64>() / v.len() as f64;
    let imbalance = mean(&zero, |r| r.imbalance);
    let gain = pooled_edges_per_ms(&half) / pooled_edges_per_ms(&zero);
    let (s0, s5) = (mean(&zero, |r| r.mean_selected_spread), mean(&half, |r| r.mean_selected_spread));
    check(
        imbalance > SUITE_IMBALANCE && gain >= SUITE_GAIN && s5 < s0,
        format!("lambda=0 imbalance {imbalance:.3}; lambda=0.5 edges/ms gain {gain:.3}; spread {s5:.3} vs {s0:.3}"),
    )
}

fn c09_zero_penalty_is_plain_ucb() -> Outcome {
    for seed in 0..20u64 {
        let (s, road) = scene(15 + seed as usize, Layout::Crossing, seed);
        let lb = SearchConfig { lambda: 0.0, selection: SelectionRule::LoadBalanced, ..budgeted(16, 2, 8, 60, seed) };
        let ucb = SearchConfig { selection: SelectionRule::PlainUcb, ..lb.clone() };
        let a = plan(&road, &s.belief(), &s.state(), &lb).unwrap();
        let b = plan(&road, &s.belief(), &s.state(), &ucb).unwrap();
        if a.telemetry.expansions != b.telemetry.expansions || a.policy != b.policy {
            return Outcome::Fail(format!("seed {seed}: logs differ"));
        }
    }
    Outcome::Pass("20 seeds with identical expansion logs and policies".into())
}

fn c10_edge_accounting() -> Outcome {
    for seed in 0..10u64 {
        let (s, road) = scene(20, Layout::Highway, seed);
        let cfg = budgeted(16, 2, 8, 50, seed);
        let h = cfg.model.depth;
        let mut planner = Planner::new(cfg).unwrap();
        let out = planner.plan(&road, &s.belief(), &s.state()).unwrap();
        // every materialised non-root node was created by one expansion of its parent
        let recount: u64 = planner.trees().iter().flat_map(|t| t.expanded_nodes().filter(|&v| v != 0).map(move |v| (h + 1 - t.depth(v)) as u64)).sum();
        let t = &out.telemetry;
        let rate_ok = (t.edges_per_ms - t.total_edges as f64 / t.wall_ms).abs() <= 1e-9 * t.edges_per_ms;
        if recount != t.total_edges || !rate_ok || t.iterations != 16 * 50 {
            return Outcome::Fail(format!("seed {seed}: {} logged vs {recount} recounted", t.total_edges));
        }
    }
    Outcome::Pass("logged edges equal tree recounts on 10 forests".into())
}

fn c11_snis() -> Outcome {
    // identity proposal: weights are 1 and the estimate is the plain mean
    let (s, road) = scene(20, Layout::Crossing, 11);
    let belief = s.belief();
    let p = qmdp_forest::model::transition::ModelParams::default();
    let library = TrajectoryLibrary::build(&belief, &s.state(), &road, p.total_steps(), p.dt).unwrap();
    let all: Vec<usize> = (0..belief.agents.len()).collect();
    let identity = build_proposal(&belief, &all, 0.0).unwrap();
    let drawn = resample_with_proposal(&library, &belief, &s.state(), &identity, 32, 11).unwrap();
    let values: Vec<f64> = drawn.iter().map(|w| w.scenario.intentions.iter().sum::<usize>() as f64).collect();
    let weights: Vec<f64> = drawn.iter().map(|w| w.weight).collect();
    let plain = values.iter().sum::<f64>() / values.len() as f64;
    let identity_ok = weights.iter().all(|&w| w == 1.0) && (snis_value(&values, &weights).unwrap() - plain).abs() <= 1e-12;

    // tilted proposal on a synthetic belief: value 1 when any agent draws its hazardous intention
    let road = Road::straight(400.0, 3, 3.5).unwrap();
    let hazard = [0.05, 0.1, 0.2];
    let agents: Vec<AgentState> = (0..3).map(|j| AgentState { x: 60.0 + 25.0 * j as f64, y: road.lane_center(j), heading: 0.0, speed: 10.0, half_length: 2.2, half_width: 0.9 }).collect();
    let synthetic = Belief {
        agents: hazard
            .iter()
            .enumerate()
            .map(|(j, &ph)| AgentBelief {
                route: Route::Main,
                intentions: vec![
                    Intention { id: 0, probability: 1.0 - ph, kind: IntentionKind::KeepLane { target_speed: 10.0 } },
                    Intention { id: 1, probability: ph, kind: IntentionKind::CutIn { target_d: road.lane_center(1) - road.lane_center(j), start_time: 0.5, duration: 2.0 } },
                ],
            })
            .collect(),
    };
    let state = SceneState { ego: EgoState { x: 20.0, y: road.lane_center(1), heading: 0.0, speed: 10.0 }, agents };
    let library = TrajectoryLibrary::build(&synthetic, &state, &road, 10, 0.1).unwrap();
    let tilted = build_proposal(&synthetic, &[0, 1, 2], 0.8).unwrap();
    let analytic = 1.0 - hazard.iter().map(|p| 1.0 - p).product::<f64>();
    let estimates: Vec<f64> = (0..100u64)
        .map(|seed| {
            let drawn = resample_with_proposal(&library, &synthetic, &state, &tilted, 64, seed).unwrap();
            let v: Vec<f64> = drawn.iter().map(|w| if w.scenario.intentions.iter().any(|&i| i == 1) { 1.0 } else { 0.0 }).collect();
            let w: Vec<f64> = drawn.iter().map(|w| w.weight).collect();
            snis_value(&v, &w).unwrap()
        })
        .collect();
    let n = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / n;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let bound = SNIS_STANDARD_ERRORS * sd / n.sqrt();
    check(
        identity_ok && (mean - analytic).abs() <= bound,
        format!("identity proposal gives plain means: {identity_ok}; tilted mean {mean:.5} vs analytic {analytic:.5}, |diff| {:.5} <= {bound:.5}", (mean - analytic).abs()),
    )
}

fn c12_tree_capacity() -> Outcome {
    let cap = tree_capacity(4, 9).unwrap();
    let mut seen = vec![false; cap];
    seen[0] = true;
    let mut frontier = vec![0usize];
    for _ in 0..4 {
        let mut next = Vec::new();
        for &v in &frontier {
            for i in 1..=9 {
                let c = child_index(v, i, 9, cap).unwrap();
                if seen[c] {
                    return Outcome::Fail(format!("index {c} reached twice"));
                }
                seen[c] = true;
                next.push(c);
            }
        }
        frontier = next;
    }
    let beyond = frontier.iter().all(|&v| child_index(v, 1, 9, cap).is_err());
    check(cap == 7381 && seen.iter().all(|&x| x) && beyond, format!("capacity {cap}, enumeration gap-free: {}", seen.iter().all(|&x| x)))
}

fn c13_imbalance_recount() -> Outcome {
    for seed in 0..10u64 {
        let (s, road) = scene(30, Layout::Crossing, seed);
        let out = plan(&road, &s.belief(), &s.state(), &budgeted(16, 1, 8, 80, seed)).unwrap();
        let log = out.telemetry.tentative_log();
        let misaligned = log
            .iter()
            .filter(|row| {
                let live: Vec<usize> = row.iter().flatten().copied().collect();
                live.windows(2).any(|w| w[0] != w[1])
            })
            .count();
        let recount = misaligned as f64 / log.len() as f64;
        if recount != out.telemetry.imbalance || imbalance_metric(&log).unwrap() != recount {
            return Outcome::Fail(format!("seed {seed}: logged {} vs recount {recount}", out.telemetry.imbalance));
        }
    }
    Outcome::Pass("imbalance recounted from 10 iteration logs".into())
}

fn c14_ego_only_episodes() -> Outcome {
    let mut worst = f64::INFINITY;
    for seed in 0..10u64 {
        let scene = generate_scene(0, Layout::Highway, seed).unwrap();
        let search = SearchConfig { scenarios: 16, workers: 1, time_budget: Some(Duration::from_millis(20)), seed, ..SearchConfig::default() };
        let cfg = EpisodeConfig { search, world_seed: seed, ..EpisodeConfig::default() };
        let r = run_episode(&scene, &cfg).unwrap();
        let free = cfg.search.model.vehicle.idm.desired_speed * cfg.duration;
        if r.collided() {
            return Outcome::Fail(format!("seed {seed} collided"));
        }
        worst = worst.min(r.progress / free);
    }
    check(worst >= FREE_FLOW_SHARE, format!("10 episodes without collision, worst progress {:.1}% of free flow", 100.0 * worst))
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Outcome); 14] = [
        ("single-lane single-worker plan equals serial reference", c01_single_lane_is_serial),
        ("exhaustive search returns the optimal sequence", c02_exhaustive_optimality),
        ("root aggregation matches recomputation", c03_root_aggregation),
        ("two-phase collision equals brute force; SAT equals polygons", c04_collision_pipeline),
        ("batch kernel equals scalar transition", c05_kernel_equivalence),
        ("eight workers give five times the throughput", c06_worker_scaling),
        ("batch width eight gives 1.5 times the throughput", c07_width_scaling),
        ("load balancing on the imbalance suite", c08_load_balancing_suite),
        ("zero penalty reduces to plain UCB", c09_zero_penalty_is_plain_ucb),
        ("edge accounting", c10_edge_accounting),
        ("self-normalised importance estimates", c11_snis),
        ("tree capacity and index enumeration", c12_tree_capacity),
        ("imbalance recount", c13_imbalance_recount),
        ("ego-only episodes reach free-flow progress", c14_ego_only_episodes),
    ];
    let mut failed = Vec::new();
    let out = std::io::stdout();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (tag, detail) = match run() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Skip(d) => ("SKIP", d),
            Outcome::Fail(d) => {
                failed.push(i + 1);
                ("FAIL", d)
            }
        };
        let mut lock = out.lock();
        let _ = writeln!(lock, "{tag} {:>2} {name}: {detail}", i + 1);
        let _ = lock.flush();
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
