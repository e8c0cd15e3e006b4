//! Root aggregation across the forest, policy extraction, stopping tests and
//! the depth-imbalance statistic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::ScenarioTree;

/// Forest-level action values at the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootStatistics {
    /// Mean return per action over all scenarios.
    pub q: Vec<f64>,
    /// `returns[k][a]`: return of root action `a` in scenario `k`.
    pub returns: Vec<Vec<f64>>,
    pub best_action: usize,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut out: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if out.map_or(true, |(_, b)| v > b) {
            out = Some((i, v));
        }
    }
    out.map(|(i, _)| i)
}

/// Averages per-scenario root returns into forest action values.
pub fn aggregate_root(returns: &[Vec<Option<f64>>]) -> Result<RootStatistics> {
    let Some(first) = returns.first() else {
        return Err(Error::NoScenarios);
    };
    let actions = first.len();
    let mut table = Vec::with_capacity(returns.len());
    for (k, row) in returns.iter().enumerate() {
        if row.len() != actions || row.iter().any(Option::is_none) {
            return Err(Error::IncompleteForest { scenario: k });
        }
        table.push(row.iter().map(|r| r.unwrap_or_default()).collect::<Vec<f64>>());
    }
    let n = table.len() as f64;
    let q: Vec<f64> = (0..actions).map(|a| table.iter().map(|r| r[a]).sum::<f64>() / n).collect();
    let best_action = argmax(&q).ok_or(Error::IncompleteForest { scenario: 0 })?;
    Ok(RootStatistics { q, returns: table, best_action })
}

/// Root returns of one tree, `None` for untried actions.
pub fn root_returns(tree: &ScenarioTree) -> Vec<Option<f64>> {
    (0..tree.branching()).map(|a| (tree.visits(0, a) > 0).then(|| tree.best_return(0, a))).collect()
}

/// Action sequence of length `depth` starting with `first`. Each deeper action
/// maximises the mean best return over the trees that expanded the node
/// reached so far; once no tree has it, the last action repeats.
pub fn extract_policy(trees: &[ScenarioTree], first: usize, depth: usize) -> Vec<usize> {
    let mut policy = Vec::with_capacity(depth);
    policy.push(first);
    let Some(b) = trees.first().map(ScenarioTree::branching) else {
        policy.resize(depth, first);
        return policy;
    };
    let mut nodes: Vec<Option<usize>> = vec![Some(0); trees.len()];
    let mut sum = vec![0.0; b];
    let mut count = vec![0usize; b];
    while policy.len() < depth {
        let a_prev = *policy.last().expect("policy starts non-empty");
        for (t, node) in trees.iter().zip(nodes.iter_mut()) {
            *node = node.and_then(|v| {
                if t.visits(v, a_prev) == 0 {
                    return None;
                }
                let c = t.child(v, a_prev).ok()?;
                t.is_expanded(c).then_some(c)
            });
        }
        sum.iter_mut().for_each(|s| *s = 0.0);
        count.iter_mut().for_each(|c| *c = 0);
        for (t, node) in trees.iter().zip(&nodes) {
            let Some(v) = *node else { continue };
            for a in 0..b {
                if t.visits(v, a) > 0 {
                    sum[a] += t.best_return(v, a);
                    count[a] += 1;
                }
            }
        }
        let means: Vec<f64> = (0..b).map(|a| if count[a] > 0 { sum[a] / count[a] as f64 } else { f64::NEG_INFINITY }).collect();
        let next = if count.iter().any(|&c| c > 0) { argmax(&means).unwrap_or(a_prev) } else { a_prev };
        policy.push(next);
    }
    policy
}

/// True when the last `window` steps of `history` each moved every value by
/// less than `epsilon` and kept the same argmax.
pub fn check_convergence(history: &[Vec<f64>], epsilon: f64, window: usize) -> bool {
    if history.len() < window + 1 {
        return false;
    }
    let tail = &history[history.len() - window - 1..];
    let lead = argmax(&tail[0]);
    tail.windows(2).all(|w| {
        argmax(&w[1]) == lead && w[0].iter().zip(&w[1]).all(|(a, b)| (b - a).abs() < epsilon)
    })
}

/// Spread of the active depths in one minibatch iteration.
pub fn depth_spread(depths: &[Option<usize>]) -> usize {
    let mut lo = usize::MAX;
    let mut hi = 0;
    for &d in depths.iter().flatten() {
        lo = lo.min(d);
        hi = hi.max(d);
    }
    hi.saturating_sub(lo)
}

/// Fraction of iterations whose depths are not all equal.
pub fn imbalance_metric(log: &[Vec<Option<usize>>]) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let misaligned = log.iter().filter(|d| depth_spread(d) >= 1).count();
    Ok(misaligned as f64 / log.len() as f64)
}
