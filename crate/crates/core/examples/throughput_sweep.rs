//! Edge throughput of the serial reference, the batched single worker and the
//! full planner across scene densities, written as CSV to stdout.
//!
//! cargo run --release --example throughput_sweep

use std::time::Duration;

use qmdp_forest::harness::bench::write_throughput_csv;
use qmdp_forest::harness::{run_benchmark, Layout, Variant};
use qmdp_forest::search::SearchConfig;

fn main() -> qmdp_forest::Result<()> {
    let base = SearchConfig { scenarios: 64, workers: 2, batch_width: 8, time_budget: Some(Duration::from_millis(60)), convergence: None, ..SearchConfig::default() };
    let records = run_benchmark(&[5, 15, 30], &Variant::ALL, 2, Layout::Highway, 11, &base)?;
    write_throughput_csv(std::io::stdout().lock(), &records)?;
    for v in Variant::ALL {
        let mine: Vec<f64> = records.iter().filter(|r| r.variant == v).map(|r| r.speedup_vs_serial).collect();
        eprintln!("{:>26}: mean speedup {:.2}", v.name(), mine.iter().sum::<f64>() / mine.len() as f64);
    }
    Ok(())
}
