//! Serial reference planner.
//!
//! A deliberately plain implementation: pointer-linked arena trees, one tree
//! at a time, the scalar transition for every step and brute-force collision
//! checks. It shares only the scenario model with the batched planner and
//! serves as its equivalence oracle when the batch width and worker count
//! are both one.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::model::belief::{sample_scenarios, Belief, Scenario, SceneState};
use crate::model::dynamics::EgoState;
use crate::model::geometry::Road;
use crate::model::transition::{scalar_rollout, simulate_macro_action, FrenetCache, ScenarioFrames, TransitionModel};
use crate::search::config::{SearchConfig, SelectionRule};
use crate::search::planner::PlanOutput;
use crate::search::root::RootStatistics;
use crate::search::telemetry::{ExpansionRecord, IterationRecord, SearchTelemetry};

struct Node {
    depth: usize,
    /// Level-order index the node would have in a complete tree.
    slot: usize,
    ego: EgoState,
    reward: f64,
    terminal: bool,
    children: Vec<Option<usize>>,
    q: Vec<f64>,
    n: Vec<u32>,
    best: Vec<f64>,
    lo: i32,
    hi: i32,
}

struct ArenaTree {
    nodes: Vec<Node>,
    actions: usize,
    horizon: usize,
}

impl ArenaTree {
    fn new(ego: EgoState, actions: usize, horizon: usize) -> Self {
        let mut t = Self { nodes: Vec::new(), actions, horizon };
        t.push(0, 0, ego, 0.0, false);
        t.refresh(0);
        t
    }

    fn push(&mut self, depth: usize, slot: usize, ego: EgoState, reward: f64, terminal: bool) -> usize {
        let b = self.actions;
        self.nodes.push(Node {
            depth,
            slot,
            ego,
            reward,
            terminal,
            children: vec![None; b],
            q: vec![0.0; b],
            n: vec![0; b],
            best: vec![f64::NEG_INFINITY; b],
            lo: self.horizon as i32 + 1,
            hi: -1,
        });
        self.nodes.len() - 1
    }

    fn untried(&self, v: usize) -> Option<usize> {
        let node = &self.nodes[v];
        if node.terminal || node.depth >= self.horizon {
            return None;
        }
        node.children.iter().position(Option::is_none)
    }

    fn refresh(&mut self, v: usize) {
        let (mut lo, mut hi) = (self.horizon as i32 + 1, -1);
        if self.untried(v).is_some() {
            lo = self.nodes[v].depth as i32;
            hi = lo;
        }
        for c in self.nodes[v].children.iter().flatten() {
            lo = lo.min(self.nodes[*c].lo);
            hi = hi.max(self.nodes[*c].hi);
        }
        self.nodes[v].lo = lo;
        self.nodes[v].hi = hi;
    }

    /// Descent with an optional alignment penalty; returns arena edges.
    fn descend(&self, ucb_c: f64, penalty: Option<(i32, f64)>) -> Option<Vec<(usize, usize)>> {
        if self.nodes[0].lo > self.nodes[0].hi {
            return None;
        }
        let mut path = Vec::new();
        let mut v = 0;
        loop {
            if let Some(a) = self.untried(v) {
                path.push((v, a));
                return Some(path);
            }
            let node = &self.nodes[v];
            let total: u32 = node.n.iter().sum();
            let tried = (0..self.actions).filter(|&a| node.n[a] > 0);
            let qmin = tried.clone().map(|a| node.q[a]).fold(f64::INFINITY, f64::min);
            let qmax = tried.map(|a| node.q[a]).fold(f64::NEG_INFINITY, f64::max);
            let mut pick: Option<(usize, f64)> = None;
            for a in 0..self.actions {
                let c = node.children[a].expect("fully expanded node");
                let child = &self.nodes[c];
                let score = if node.n[a] == 0 {
                    f64::INFINITY
                } else if child.lo > child.hi {
                    f64::NEG_INFINITY
                } else {
                    let qn = if qmax - qmin > 0.0 { (node.q[a] - qmin) / (qmax - qmin) } else { 0.0 };
                    let u = qn + ucb_c * ((total as f64).ln() / node.n[a] as f64).sqrt();
                    match penalty {
                        Some((r, lambda)) if lambda != 0.0 => u - lambda * (r.clamp(child.lo, child.hi) - r).abs() as f64,
                        _ => u,
                    }
                };
                if score > pick.map_or(f64::NEG_INFINITY, |p| p.1) {
                    pick = Some((a, score));
                }
            }
            let (a, _) = pick?;
            path.push((v, a));
            v = node.children[a].expect("fully expanded node");
        }
    }

    fn backup(&mut self, path: &[(usize, usize)], leaf: f64, gamma: f64) {
        let mut g = leaf;
        for &(v, a) in path.iter().rev() {
            let c = self.nodes[v].children[a].expect("backed-up edge exists");
            g = self.nodes[c].reward + gamma * g;
            let node = &mut self.nodes[v];
            node.n[a] += 1;
            node.q[a] += (g - node.q[a]) / node.n[a] as f64;
            if g > node.best[a] {
                node.best[a] = g;
            }
        }
        for &(v, a) in path.iter().rev() {
            if let Some(c) = self.nodes[v].children[a] {
                self.refresh(c);
            }
            self.refresh(v);
        }
    }
}

fn first_max(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Serial search over freshly sampled scenarios.
pub fn serial_reference_plan(road: &Road, belief: &Belief, state: &SceneState, config: &SearchConfig) -> Result<PlanOutput> {
    let start = Instant::now();
    config.validate()?;
    let p = &config.model;
    let scenarios = sample_scenarios(belief, state, road, config.scenarios, config.seed, p.total_steps(), p.dt)?;
    search(road, &state.ego, &scenarios, config, start)
}

/// Serial search over caller-supplied scenarios.
pub fn serial_reference_plan_scenarios(road: &Road, ego: &EgoState, scenarios: &[Scenario], config: &SearchConfig) -> Result<PlanOutput> {
    config.validate()?;
    search(road, ego, scenarios, config, Instant::now())
}

fn search(road: &Road, ego: &EgoState, scenarios: &[Scenario], config: &SearchConfig, start: Instant) -> Result<PlanOutput> {
    if scenarios.is_empty() {
        return Err(Error::NoScenarios);
    }
    let actions = config.action_set()?;
    let b = actions.len();
    let h = config.model.depth;
    let gamma = config.model.reward.discount;
    let model = TransitionModel::new(road, &actions, &config.model, ego);
    let mut cache = FrenetCache::new();
    let frames: Vec<ScenarioFrames> = scenarios.iter().map(|s| ScenarioFrames::build_cached(road, s, &mut cache)).collect();
    let mut trees: Vec<ArenaTree> = scenarios.iter().map(|_| ArenaTree::new(*ego, b, h)).collect();
    let mut done = vec![false; trees.len()];
    let mut counts = vec![0usize; trees.len()];
    let mut history: Vec<Vec<Vec<f64>>> = vec![Vec::new(); trees.len()];
    let mut telemetry = SearchTelemetry::default();

    while done.iter().any(|d| !d) {
        for k in 0..trees.len() {
            if done[k] {
                continue;
            }
            let tree = &mut trees[k];
            let Some(tentative) = tree.descend(config.ucb_c, None) else {
                done[k] = true;
                continue;
            };
            let d_ref = tentative.len() as i32 - 1;
            let path = match config.selection {
                SelectionRule::PlainUcb => Some(tentative.clone()),
                SelectionRule::LoadBalanced => tree.descend(config.ucb_c, Some((d_ref, config.lambda))),
            };
            let Some(path) = path else {
                done[k] = true;
                continue;
            };
            let (v, a) = *path.last().expect("non-empty path");
            let depth = tree.nodes[v].depth;
            let out = simulate_macro_action(&model, &frames[k], &tree.nodes[v].ego, a, depth);
            let slot = tree.nodes[v].slot * b + a + 1;
            let c = tree.push(depth + 1, slot, out.ego, out.reward, out.terminal);
            tree.nodes[v].children[a] = Some(c);
            let leaf = if !out.terminal && depth + 1 < h { scalar_rollout(&model, &frames[k], &out.ego, a, depth + 1) } else { 0.0 };
            tree.backup(&path, leaf, gamma);
            telemetry.expansions.push(ExpansionRecord { iteration: counts[k], minibatch: k, scenario: k, node: tree.nodes[v].slot, action: a, depth });
            telemetry.iterations_log.push(IterationRecord {
                iteration: counts[k],
                minibatch: k,
                reference_depth: Some(d_ref as usize),
                tentative: vec![Some(d_ref as usize)],
                selected: vec![Some(depth)],
            });
            counts[k] += 1;
            if counts[k] < b {
                continue;
            }
            let mut stop = config.iteration_budget.is_some_and(|n| counts[k] >= n);
            if let Some(c) = config.convergence {
                let hist = &mut history[k];
                hist.push(tree.nodes[0].q.clone());
                if hist.len() > c.window + 1 {
                    hist.remove(0);
                }
                if hist.len() == c.window + 1 {
                    let lead = first_max(&hist[0]);
                    stop |= hist.windows(2).all(|w| first_max(&w[1]) == lead && (0..b).all(|i| (w[1][i] - w[0][i]).abs() < c.epsilon));
                }
            }
            stop |= config.time_budget.is_some_and(|tb| start.elapsed() >= tb);
            done[k] = stop;
        }
    }

    let kf = trees.len() as f64;
    let mut table = Vec::with_capacity(trees.len());
    for (k, t) in trees.iter().enumerate() {
        if t.nodes[0].n.iter().any(|&n| n == 0) {
            return Err(Error::IncompleteForest { scenario: k });
        }
        table.push(t.nodes[0].best.clone());
    }
    let q: Vec<f64> = (0..b).map(|a| table.iter().map(|r| r[a]).sum::<f64>() / kf).collect();
    let first = first_max(&q);

    let mut policy = vec![first];
    let mut cursor: Vec<Option<usize>> = vec![Some(0); trees.len()];
    while policy.len() < h {
        let prev = *policy.last().expect("non-empty policy");
        for (t, cur) in trees.iter().zip(cursor.iter_mut()) {
            *cur = cur.and_then(|v| t.nodes[v].children[prev]);
        }
        let mut means = vec![f64::NEG_INFINITY; b];
        let mut any = false;
        for a in 0..b {
            let vals: Vec<f64> = trees.iter().zip(&cursor).filter_map(|(t, cur)| cur.filter(|&v| t.nodes[v].n[a] > 0).map(|v| t.nodes[v].best[a])).collect();
            if !vals.is_empty() {
                let mut s = 0.0;
                for x in &vals {
                    s += x;
                }
                means[a] = s / vals.len() as f64;
                any = true;
            }
        }
        policy.push(if any { first_max(&means) } else { prev });
    }

    telemetry.expansions.sort_by_key(|e| (e.iteration, e.minibatch, e.scenario));
    telemetry.iterations_log.sort_by_key(|r| (r.iteration, r.minibatch));
    telemetry.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    telemetry.iterations = telemetry.expansions.len();
    telemetry.total_edges = telemetry.expansions.iter().map(|e| (h - e.depth) as u64).sum();
    telemetry.edges_per_ms = telemetry.total_edges as f64 / telemetry.wall_ms;
    let misaligned = telemetry.iterations_log.iter().filter(|r| r.tentative.iter().flatten().max() != r.tentative.iter().flatten().min()).count();
    telemetry.imbalance = if telemetry.iterations_log.is_empty() { 0.0 } else { misaligned as f64 / telemetry.iterations_log.len() as f64 };
    telemetry.q = q.clone();
    Ok(PlanOutput { policy, root: RootStatistics { q, returns: table, best_action: first }, telemetry })
}
