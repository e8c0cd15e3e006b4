//! Per-cycle search logs and the fixed-order telemetry CSV row.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::search::root::{depth_spread, imbalance_metric};
use crate::tree::edge_contribution;

/// One node expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub iteration: usize,
    pub minibatch: usize,
    pub scenario: usize,
    pub node: usize,
    pub action: usize,
    /// Depth of the expanded node.
    pub depth: usize,
}

/// One lockstep iteration of a minibatch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub minibatch: usize,
    pub reference_depth: Option<usize>,
    /// Plain UCB frontier depths per lane, `None` for exhausted trees.
    pub tentative: Vec<Option<usize>>,
    /// Depths actually expanded per lane.
    pub selected: Vec<Option<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchTelemetry {
    pub wall_ms: f64,
    /// Tree iterations summed over the forest.
    pub iterations: usize,
    pub total_edges: u64,
    pub edges_per_ms: f64,
    /// Fraction of iterations whose tentative depths disagree.
    pub imbalance: f64,
    /// Forest action values at the root.
    pub q: Vec<f64>,
    /// Expansions sorted by iteration, then minibatch, then lane.
    pub expansions: Vec<ExpansionRecord>,
    pub iterations_log: Vec<IterationRecord>,
}

/// Column order of [`SearchTelemetry::write_csv_row`]; one `q_<a>` per action.
pub fn telemetry_header(actions: usize) -> Vec<String> {
    let mut h: Vec<String> = ["wall_ms", "iterations", "total_edges", "edges_per_ms", "imbalance"].iter().map(|s| s.to_string()).collect();
    h.extend((0..actions).map(|a| format!("q_{a}")));
    h
}

/// Sum of `H - d` over every expansion.
pub fn count_edges(expansions: &[ExpansionRecord], horizon: usize) -> u64 {
    expansions.iter().map(|e| edge_contribution(e.depth, horizon) as u64).sum()
}

impl SearchTelemetry {
    pub fn tentative_log(&self) -> Vec<Vec<Option<usize>>> {
        self.iterations_log.iter().map(|r| r.tentative.clone()).collect()
    }

    pub fn selected_log(&self) -> Vec<Vec<Option<usize>>> {
        self.iterations_log.iter().map(|r| r.selected.clone()).collect()
    }

    /// Imbalance over the tentative depths, 0 for an empty log.
    pub fn tentative_imbalance(&self) -> f64 {
        imbalance_metric(&self.tentative_log()).unwrap_or(0.0)
    }

    /// Mean spread of the expanded depths per iteration.
    pub fn mean_selected_spread(&self) -> f64 {
        if self.iterations_log.is_empty() {
            return 0.0;
        }
        let total: usize = self.iterations_log.iter().map(|r| depth_spread(&r.selected)).sum();
        total as f64 / self.iterations_log.len() as f64
    }

    pub fn write_csv_row<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let mut row = vec![
            format!("{:.6}", self.wall_ms),
            self.iterations.to_string(),
            self.total_edges.to_string(),
            format!("{:.6}", self.edges_per_ms),
            format!("{:.6}", self.imbalance),
        ];
        row.extend(self.q.iter().map(|q| format!("{q:.9}")));
        w.write_record(&row)?;
        Ok(())
    }
}
