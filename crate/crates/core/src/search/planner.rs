//! Forest search driver: scenario sampling, per-worker minibatch loops, root
//! aggregation and policy extraction.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::Result;
use crate::model::action::ActionSet;
use crate::model::belief::{sample_scenarios, Belief, Scenario, SceneState};
use crate::model::dynamics::EgoState;
use crate::model::geometry::Road;
use crate::model::transition::{MacroOutcome, TransitionModel};
use crate::search::config::{SearchConfig, SelectionRule};
use crate::search::kernel::{BatchKernel, ExpansionSlot, KernelContext, RolloutSlot};
use crate::search::prepared::{PrepareCache, PreparedScenario};
use crate::search::root::{aggregate_root, check_convergence, extract_policy, root_returns, RootStatistics};
use crate::search::select::MinibatchSelection;
use crate::search::telemetry::{count_edges, ExpansionRecord, IterationRecord, SearchTelemetry};
use crate::tree::ScenarioTree;

#[derive(Clone, Debug)]
pub struct PlanOutput {
    /// Indices into the configured action set, one per tree level.
    pub policy: Vec<usize>,
    pub root: RootStatistics,
    pub telemetry: SearchTelemetry,
}

/// Reusable planner: trees and kernels survive across cycles.
pub struct Planner {
    config: SearchConfig,
    actions: ActionSet,
    trees: Vec<ScenarioTree>,
    kernels: Vec<BatchKernel>,
}

struct Shared<'a> {
    config: &'a SearchConfig,
    road: &'a Road,
    actions: &'a ActionSet,
    ego: EgoState,
    scenarios: &'a [Scenario],
    start: Instant,
}

#[derive(Default)]
struct WorkerLog {
    expansions: Vec<ExpansionRecord>,
    iterations: Vec<IterationRecord>,
}

/// Contiguous minibatch range of worker `w`.
pub fn worker_minibatches(minibatches: usize, workers: usize, w: usize) -> std::ops::Range<usize> {
    (w * minibatches / workers)..((w + 1) * minibatches / workers)
}

impl Planner {
    pub fn new(config: SearchConfig) -> Result<Self> {
        config.validate()?;
        let actions = config.action_set()?;
        let trees = (0..config.scenarios)
            .map(|_| ScenarioTree::allocate(config.model.depth, actions.len()))
            .collect::<Result<Vec<_>>>()?;
        let kernels = (0..config.workers).map(|_| BatchKernel::for_lanes(config.batch_width)).collect();
        Ok(Self { config, actions, trees, kernels })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    /// Seed for the next cycle's scenario draws.
    pub fn set_seed(&mut self, seed: u64) {
        self.config.seed = seed;
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    /// Trees of the last cycle, in scenario order.
    pub fn trees(&self) -> &[ScenarioTree] {
        &self.trees
    }

    /// Samples the configured number of scenarios and searches them.
    pub fn plan(&mut self, road: &Road, belief: &Belief, state: &SceneState) -> Result<PlanOutput> {
        let start = Instant::now();
        let p = &self.config.model;
        let scenarios = sample_scenarios(belief, state, road, self.config.scenarios, self.config.seed, p.total_steps(), p.dt)?;
        self.search(road, &state.ego, &scenarios, start)
    }

    /// Searches caller-supplied scenarios; their count must match the config.
    pub fn plan_scenarios(&mut self, road: &Road, ego: &EgoState, scenarios: &[Scenario]) -> Result<PlanOutput> {
        self.search(road, ego, scenarios, Instant::now())
    }

    fn search(&mut self, road: &Road, ego: &EgoState, scenarios: &[Scenario], start: Instant) -> Result<PlanOutput> {
        let cfg = &self.config;
        if scenarios.len() != cfg.scenarios {
            return Err(crate::Error::InvalidConfig(format!("expected {} scenarios, got {}", cfg.scenarios, scenarios.len())));
        }
        let shared = Shared { config: cfg, road, actions: &self.actions, ego: *ego, scenarios, start };
        let w = cfg.batch_width;
        let nb = cfg.minibatches();
        let mut logs: Vec<Result<WorkerLog>> = Vec::with_capacity(cfg.workers);
        if cfg.workers == 1 {
            logs.push(run_worker(&shared, 0..nb, &mut self.trees, &mut self.kernels[0]));
        } else {
            let mut rest: &mut [ScenarioTree] = &mut self.trees;
            let mut parts = Vec::with_capacity(cfg.workers);
            for wi in 0..cfg.workers {
                let range = worker_minibatches(nb, cfg.workers, wi);
                let (head, tail) = rest.split_at_mut(range.len() * w);
                parts.push((range, head));
                rest = tail;
            }
            let shared = &shared;
            std::thread::scope(|s| {
                let handles: Vec<_> = parts
                    .into_iter()
                    .zip(self.kernels.iter_mut())
                    .map(|((range, trees), kernel)| s.spawn(move || run_worker(shared, range, trees, kernel)))
                    .collect();
                for h in handles {
                    logs.push(h.join().expect("search worker panicked"));
                }
            });
        }
        let mut telemetry = SearchTelemetry::default();
        for log in logs {
            let log = log?;
            telemetry.expansions.extend(log.expansions);
            telemetry.iterations_log.extend(log.iterations);
        }
        telemetry.expansions.sort_by_key(|e| (e.iteration, e.minibatch, e.scenario));
        telemetry.iterations_log.sort_by_key(|r| (r.iteration, r.minibatch));

        let returns: Vec<Vec<Option<f64>>> = self.trees.iter().map(root_returns).collect();
        let root = aggregate_root(&returns)?;
        let policy = extract_policy(&self.trees, root.best_action, cfg.model.depth);

        telemetry.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        telemetry.iterations = telemetry.expansions.len();
        telemetry.total_edges = count_edges(&telemetry.expansions, cfg.model.depth);
        telemetry.edges_per_ms = telemetry.total_edges as f64 / telemetry.wall_ms;
        telemetry.imbalance = telemetry.tentative_imbalance();
        telemetry.q = root.q.clone();
        Ok(PlanOutput { policy, root, telemetry })
    }
}

/// One-shot planning with a fresh [`Planner`].
pub fn plan(road: &Road, belief: &Belief, state: &SceneState, config: &SearchConfig) -> Result<PlanOutput> {
    Planner::new(config.clone())?.plan(road, belief, state)
}

struct MinibatchState {
    iterations: usize,
    done: bool,
    history: VecDeque<Vec<f64>>,
}

fn run_worker(shared: &Shared, minibatches: std::ops::Range<usize>, trees: &mut [ScenarioTree], kernel: &mut BatchKernel) -> Result<WorkerLog> {
    let cfg = shared.config;
    let w = cfg.batch_width;
    let first = minibatches.start * w;
    let scenarios = &shared.scenarios[first..minibatches.end * w];
    let model = TransitionModel::new(shared.road, shared.actions, &cfg.model, &shared.ego);
    let mut cache = PrepareCache::new();
    let prepared: Vec<PreparedScenario> = scenarios.iter().map(|s| PreparedScenario::build_cached(shared.road, s, &cfg.model, &cfg.spatial, &mut cache)).collect();
    let ctx = KernelContext { model, scenarios: &prepared, margin: cfg.spatial.margin };
    for t in trees.iter_mut() {
        t.reset();
        t.set_root(&shared.ego);
    }

    let b = shared.actions.len();
    let horizon = cfg.model.depth;
    let gamma = cfg.model.reward.discount;
    let load_balance = cfg.selection == SelectionRule::LoadBalanced;
    let window = cfg.convergence.map_or(0, |c| c.window);
    let mut states: Vec<MinibatchState> = minibatches.clone().map(|_| MinibatchState { iterations: 0, done: false, history: VecDeque::new() }).collect();
    let mut sel = MinibatchSelection::default();
    let mut exp_slots: Vec<Option<ExpansionSlot>> = vec![None; w];
    let mut exp_out: Vec<Option<MacroOutcome>> = Vec::with_capacity(w);
    let mut roll_slots: Vec<Option<RolloutSlot>> = vec![None; w];
    let mut roll_out: Vec<Option<f64>> = Vec::with_capacity(w);
    let mut log = WorkerLog::default();
    let mut live = states.len();

    while live > 0 {
        for (m, st) in states.iter_mut().enumerate() {
            if st.done {
                continue;
            }
            let mb = minibatches.start + m;
            let lanes = &mut trees[m * w..(m + 1) * w];
            traverse_select(lanes, cfg, load_balance, &mut sel);
            if sel.is_complete() {
                st.done = true;
                live -= 1;
                continue;
            }
            for (i, slot) in exp_slots.iter_mut().enumerate() {
                *slot = sel.selected[i].as_ref().map(|s| ExpansionSlot {
                    scenario: m * w + i,
                    node: s.node(),
                    action: s.action(),
                    depth: lanes[i].depth(s.node()),
                    ego: lanes[i].ego(s.node()),
                });
            }
            kernel.expand(&ctx, &exp_slots, &mut exp_out);
            for i in 0..w {
                roll_slots[i] = None;
                let (Some(slot), Some(out)) = (exp_slots[i], exp_out[i]) else { continue };
                lanes[i].write_child(slot.node, slot.action, &out.ego, out.reward, out.terminal)?;
                if !out.terminal && slot.depth + 1 < horizon {
                    roll_slots[i] = Some(RolloutSlot { scenario: slot.scenario, action: slot.action, depth: slot.depth + 1, ego: out.ego });
                }
                log.expansions.push(ExpansionRecord {
                    iteration: st.iterations,
                    minibatch: mb,
                    scenario: first + slot.scenario,
                    node: slot.node,
                    action: slot.action,
                    depth: slot.depth,
                });
            }
            kernel.rollout(&ctx, &roll_slots, &mut roll_out);
            for i in 0..w {
                if let Some(s) = &sel.selected[i] {
                    lanes[i].backup(&s.path, roll_out[i].unwrap_or(0.0), gamma);
                }
            }
            log.iterations.push(IterationRecord {
                iteration: st.iterations,
                minibatch: mb,
                reference_depth: sel.reference_depth,
                tentative: sel.tentative_depths(),
                selected: sel.selected_depths(),
            });
            st.iterations += 1;
            if st.iterations < b {
                continue;
            }
            let mut stop = cfg.iteration_budget.is_some_and(|n| st.iterations >= n);
            if let Some(c) = cfg.convergence {
                let mut mean = vec![0.0; b];
                for t in lanes.iter() {
                    for (acc, q) in mean.iter_mut().zip(t.q_row(0)) {
                        *acc += q;
                    }
                }
                mean.iter_mut().for_each(|q| *q /= w as f64);
                st.history.push_back(mean);
                if st.history.len() > window + 1 {
                    st.history.pop_front();
                }
                stop |= check_convergence(st.history.make_contiguous(), c.epsilon, c.window);
            }
            stop |= cfg.time_budget.is_some_and(|tb| shared.start.elapsed() >= tb);
            if stop {
                st.done = true;
                live -= 1;
            }
        }
    }
    Ok(log)
}

fn traverse_select(lanes: &[ScenarioTree], cfg: &SearchConfig, load_balance: bool, sel: &mut MinibatchSelection) {
    crate::search::select::traverse_select(lanes.iter(), cfg.ucb_c, cfg.lambda, load_balance, sel);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::reference::serial_reference_plan;
    use crate::harness::scene::{generate_scene, Layout};
    use crate::model::transition::simulate_sequence;

    fn config(k: usize, m: usize, w: usize, iters: usize) -> SearchConfig {
        SearchConfig { scenarios: k, workers: m, batch_width: w, time_budget: None, iteration_budget: Some(iters), convergence: None, ..Default::default() }
    }

    #[test]
    fn single_lane_matches_serial_reference() {
        for seed in 0..4 {
            let scene = generate_scene(if seed % 2 == 0 { 5 } else { 30 }, Layout::Crossing, seed).unwrap();
            let road = scene.build_road().unwrap();
            let mut cfg = config(4, 1, 1, 40);
            cfg.seed = seed;
            cfg.convergence = Some(Default::default());
            let got = plan(&road, &scene.belief(), &scene.state(), &cfg).unwrap();
            let want = serial_reference_plan(&road, &scene.belief(), &scene.state(), &cfg).unwrap();
            assert_eq!(got.policy, want.policy);
            assert_eq!(got.root, want.root);
            assert_eq!(got.telemetry.expansions, want.telemetry.expansions);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let scene = generate_scene(30, Layout::Highway, 11).unwrap();
        let road = scene.build_road().unwrap();
        let base = plan(&road, &scene.belief(), &scene.state(), &config(16, 1, 4, 30)).unwrap();
        for m in [2, 3, 8] {
            let other = plan(&road, &scene.belief(), &scene.state(), &config(16, m, 4, 30)).unwrap();
            assert_eq!(other.policy, base.policy);
            assert_eq!(other.root, base.root);
            assert_eq!(other.telemetry.expansions, base.telemetry.expansions);
        }
    }

    #[test]
    fn visits_and_edges_are_conserved() {
        let scene = generate_scene(15, Layout::Highway, 2).unwrap();
        let road = scene.build_road().unwrap();
        let cfg = config(8, 1, 8, 25);
        let mut p = Planner::new(cfg.clone()).unwrap();
        let out = p.plan(&road, &scene.belief(), &scene.state()).unwrap();
        for t in p.trees() {
            assert_eq!(t.visit_row(0).iter().sum::<u32>(), 25);
        }
        assert_eq!(out.telemetry.iterations, 8 * 25);
        let edges: u64 = out.telemetry.expansions.iter().map(|e| (cfg.model.depth - e.depth) as u64).sum();
        assert_eq!(out.telemetry.total_edges, edges);
        for e in &out.telemetry.expansions {
            assert!(!p.trees()[e.scenario].is_terminal(e.node));
        }
    }

    #[test]
    fn zero_time_budget_stops_after_root_expansion() {
        let scene = generate_scene(5, Layout::Highway, 3).unwrap();
        let road = scene.build_road().unwrap();
        let cfg = SearchConfig { scenarios: 8, workers: 1, time_budget: Some(std::time::Duration::ZERO), ..Default::default() };
        let out = plan(&road, &scene.belief(), &scene.state(), &cfg).unwrap();
        assert_eq!(out.telemetry.iterations, 8 * 9);
        assert!(out.telemetry.expansions.iter().all(|e| e.depth == 0));
        assert_eq!(out.policy.len(), cfg.model.depth);
    }

    #[test]
    fn exhaustive_search_finds_best_sequence() {
        for (seed, actions, depth) in [(0u64, vec![1, 3], 2), (1, vec![0, 1, 2], 3), (2, vec![1, 4, 7], 2)] {
            let scene = generate_scene(30, Layout::Crossing, seed).unwrap();
            let road = scene.build_road().unwrap();
            let mut cfg = config(1, 1, 1, 0);
            cfg.iteration_budget = None;
            cfg.actions = actions.clone();
            cfg.model.depth = depth;
            cfg.seed = seed;
            let mut p = Planner::new(cfg.clone()).unwrap();
            let out = p.plan(&road, &scene.belief(), &scene.state()).unwrap();
            let set = cfg.action_set().unwrap();
            let model = TransitionModel::new(&road, &set, &cfg.model, &scene.ego);
            let sc = sample_scenarios(&scene.belief(), &scene.state(), &road, 1, seed, cfg.model.total_steps(), cfg.model.dt).unwrap();
            let frames = crate::model::transition::ScenarioFrames::build(&road, &sc[0]);
            let value = |seq: &[usize]| simulate_sequence(&model, &frames, &scene.ego, seq).unwrap().discounted_return(cfg.model.reward.discount);
            let b = actions.len();
            let best = (0..b.pow(depth as u32))
                .map(|mut code| {
                    let mut seq = vec![0; depth];
                    for s in seq.iter_mut().rev() {
                        *s = code % b;
                        code /= b;
                    }
                    value(&seq)
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(value(&out.policy), best);
        }
    }
}
