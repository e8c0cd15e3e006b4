use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use qmdp_forest::harness::bench::{write_throughput_csv, DEFAULT_DENSITIES};
use qmdp_forest::harness::{generate_scene, run_benchmark, run_episode, EpisodeConfig, Layout, SceneSpec, Variant};
use qmdp_forest::search::telemetry::telemetry_header;
use qmdp_forest::search::{plan, SearchConfig};
use qmdp_forest::trajopt::{refine, RefineParams};
use qmdp_forest::Result;

#[derive(Parser)]
#[command(name = "qmdp-forest", version, about = "Scenario-forest QMDP planning for driving scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one cycle and print the policy, root values and telemetry.
    Plan(Common),
    /// Run a closed-loop episode and write the result as JSON.
    Episode {
        #[command(flatten)]
        common: Common,
        /// Simulated seconds.
        #[arg(long, default_value_t = 15.0)]
        duration: f64,
        /// Seed of the true-world intention draw.
        #[arg(long, default_value_t = 0)]
        world_seed: u64,
    },
    /// Throughput over densities and planner variants, written as CSV.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variants: serial, single-worker-vectorized, full, lambda-zero.
        #[arg(long, value_delimiter = ',', default_value = "serial,single-worker-vectorized,full,lambda-zero")]
        variants: Vec<Variant>,
        #[arg(long, default_value_t = 3)]
        repetitions: usize,
    },
    /// Sweep the depth-alignment weight on one scene.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weights to compare.
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,1,2")]
        lambdas: Vec<f64>,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// Scene JSON; a synthetic scene is generated when absent.
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Agents in the synthetic scene; `bench` sweeps 5, 15, 30 and 60 when absent.
    #[arg(long)]
    density: Option<usize>,
    #[arg(long, default_value = "highway")]
    layout: Layout,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    workers: usize,
    #[arg(long, default_value_t = 8)]
    batch_width: usize,
    #[arg(long, default_value_t = 64)]
    scenarios: usize,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 100)]
    time_budget_ms: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> SearchConfig {
        SearchConfig {
            scenarios: self.scenarios,
            workers: self.workers,
            batch_width: self.batch_width,
            lambda: self.lambda,
            time_budget: Some(Duration::from_millis(self.time_budget_ms)),
            seed: self.seed,
            ..SearchConfig::default()
        }
    }

    fn scene(&self) -> Result<SceneSpec> {
        match &self.scene {
            Some(path) => SceneSpec::load(path),
            None => generate_scene(self.density.unwrap_or(30), self.layout, self.seed),
        }
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.output {
            Some(path) => Box::new(File::create(path)?),
            None => Box::new(io::stdout().lock()),
        })
    }
}

fn cmd_plan(c: &Common) -> Result<()> {
    let scene = c.scene()?;
    let road = scene.build_road()?;
    let config = c.config();
    let out = plan(&road, &scene.belief(), &scene.state(), &config)?;
    let refined = refine(&road, &scene.belief(), &scene.state(), &out.policy, &config, &RefineParams::default())?;
    eprintln!("policy {:?}", out.policy);
    eprintln!("best action {} from {} agents, {} critical", out.root.best_action, scene.agents.len(), refined.critical.len());
    eprintln!("selected candidate of scenario {} with score {:.3}", refined.trajectory.scenario, refined.selection.score);
    let mut w = csv::Writer::from_writer(c.sink()?);
    w.write_record(telemetry_header(out.telemetry.q.len()))?;
    out.telemetry.write_csv_row(&mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_episode(c: &Common, duration: f64, world_seed: u64) -> Result<()> {
    let scene = c.scene()?;
    let config = EpisodeConfig { search: c.config(), duration, world_seed, ..EpisodeConfig::default() };
    let result = run_episode(&scene, &config)?;
    eprintln!(
        "{} cycles, progress {:.1} m, {}",
        result.cycles.len(),
        result.progress,
        if result.collided() { "collided" } else { "no collision" }
    );
    let mut sink = c.sink()?;
    serde_json::to_writer_pretty(&mut sink, &result)?;
    writeln!(sink)?;
    Ok(())
}

fn cmd_bench(c: &Common, variants: &[Variant], repetitions: usize) -> Result<()> {
    let densities = c.density.map_or_else(|| DEFAULT_DENSITIES.to_vec(), |d| vec![d]);
    let records = run_benchmark(&densities, variants, repetitions, c.layout, c.seed, &c.config())?;
    write_throughput_csv(c.sink()?, &records)
}

fn cmd_ablate(c: &Common, lambdas: &[f64]) -> Result<()> {
    let scene = c.scene()?;
    let road = scene.build_road()?;
    let mut w = csv::Writer::from_writer(c.sink()?);
    w.write_record(["lambda", "total_edges", "wall_ms", "edges_per_ms", "imbalance", "mean_selected_spread", "best_action"])?;
    for &lambda in lambdas {
        let config = SearchConfig { lambda, ..c.config() };
        let out = plan(&road, &scene.belief(), &scene.state(), &config)?;
        let t = &out.telemetry;
        w.write_record(&[
            lambda.to_string(),
            t.total_edges.to_string(),
            format!("{:.6}", t.wall_ms),
            format!("{:.6}", t.edges_per_ms),
            format!("{:.6}", t.tentative_imbalance()),
            format!("{:.6}", t.mean_selected_spread()),
            out.root.best_action.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(c) => cmd_plan(c),
        Command::Episode { common, duration, world_seed } => cmd_episode(common, *duration, *world_seed),
        Command::Bench { common, variants, repetitions } => cmd_bench(common, variants, *repetitions),
        Command::Ablate { common, lambdas } => cmd_ablate(common, lambdas),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
