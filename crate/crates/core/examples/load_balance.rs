//! Depth imbalance and throughput on the constructed suite with and without
//! the depth-alignment penalty.
//!
//! cargo run --release --example load_balance

use qmdp_forest::harness::bench::pooled_edges_per_ms;
use qmdp_forest::harness::run_suite_cycle;
use qmdp_forest::search::SelectionRule;

fn main() -> qmdp_forest::Result<()> {
    let cycles = 10;
    println!("{:>8} {:>10} {:>10} {:>12} {:>10}", "lambda", "imbalance", "spread", "edges", "edges/ms");
    for lambda in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let records = (0..cycles).map(|c| run_suite_cycle(c, lambda, SelectionRule::LoadBalanced, 3)).collect::<qmdp_forest::Result<Vec<_>>>()?;
        let n = records.len() as f64;
        let imbalance = records.iter().map(|r| r.imbalance).sum::<f64>() / n;
        let spread = records.iter().map(|r| r.mean_selected_spread).sum::<f64>() / n;
        let edges: u64 = records.iter().map(|r| r.total_edges).sum();
        println!("{lambda:>8.2} {imbalance:>10.3} {spread:>10.3} {edges:>12} {:>10.1}", pooled_edges_per_ms(&records));
    }
    Ok(())
}
