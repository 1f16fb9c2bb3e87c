//! Command-line front end and local JSON service for the sparse Hamming graph
//! design tools.

pub mod commands;
pub mod exit;
pub mod input;
pub mod manifest;
pub mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shg_core::explore::Evaluator;

#[derive(Debug, Parser)]
#[command(name = "shg", version, about = "Sparse Hamming graph NoC topology generation, cost prediction and exploration")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a topology and write it as JSON.
    Generate(GenerateArgs),
    /// Floorplan, route and cost one or more topologies.
    Predict(PredictArgs),
    /// Cycle-level simulation under uniform random traffic.
    Simulate(SimulateArgs),
    /// Search sparse Hamming graph parameters under an area budget.
    Explore(ExploreArgs),
    /// Serve the evaluation API on a local socket.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Ring,
    Mesh,
    Torus,
    FoldedTorus,
    Hypercube,
    #[value(alias = "flattened-butterfly")]
    Fb,
    Shg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvaluatorArg {
    Analytic,
    Simulated,
}

impl From<EvaluatorArg> for Evaluator {
    fn from(e: EvaluatorArg) -> Self {
        match e {
            EvaluatorArg::Analytic => Evaluator::Analytic,
            EvaluatorArg::Simulated => Evaluator::Simulated,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub topo: Family,
    #[arg(long)]
    pub rows: u32,
    #[arg(long)]
    pub cols: u32,
    /// Row skip distances, comma separated (shg only).
    #[arg(long, value_delimiter = ',')]
    pub sr: Vec<u32>,
    /// Column skip distances, comma separated (shg only).
    #[arg(long, value_delimiter = ',')]
    pub sc: Vec<u32>,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Topology JSON file; repeat for a batch.
    #[arg(long, short, required = true)]
    pub topology: Vec<PathBuf>,
    #[arg(long, short)]
    pub arch: PathBuf,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    /// Include the floorplan, unit-cell grid and routed paths (json only).
    #[arg(long)]
    pub full: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RouterArgs {
    #[arg(long, default_value_t = 8)]
    pub vcs: u32,
    /// Flits per virtual channel.
    #[arg(long, default_value_t = 32)]
    pub buffer: u32,
    #[arg(long, default_value_t = 1)]
    pub router_delay: u32,
    #[arg(long, default_value_t = 4)]
    pub packet_length: u32,
    #[arg(long, env = "HW_SEED", default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct WindowArgs {
    #[arg(long, default_value_t = 10_000)]
    pub warmup: u64,
    #[arg(long, default_value_t = 50_000)]
    pub measure: u64,
    #[arg(long, default_value_t = 20_000)]
    pub drain: u64,
    /// Points on the latency curve of a sweep.
    #[arg(long, default_value_t = 10)]
    pub points: u32,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, short)]
    pub topology: PathBuf,
    #[arg(long, short)]
    pub arch: PathBuf,
    /// Offered load in flits/cycle/tile; without it a saturation sweep runs.
    #[arg(long)]
    pub load: Option<f64>,
    #[command(flatten)]
    pub router: RouterArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long, short)]
    pub arch: PathBuf,
    #[arg(long)]
    pub rows: u32,
    #[arg(long)]
    pub cols: u32,
    /// Largest admissible area overhead.
    #[arg(long, default_value_t = shg_core::explore::DEFAULT_BUDGET)]
    pub budget: f64,
    #[arg(long, value_enum, default_value_t = EvaluatorArg::Analytic)]
    pub evaluator: EvaluatorArg,
    /// Evaluate every configuration instead of climbing.
    #[arg(long)]
    pub exhaustive: bool,
    /// Re-score the winner with the simulator.
    #[arg(long)]
    pub rescore: bool,
    #[command(flatten)]
    pub router: RouterArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Architecture used when a request carries none.
    #[arg(long, short)]
    pub arch: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Predict(a) => commands::predict(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Explore(a) => commands::explore(&a),
        Command::Serve(a) => serve::run(&a),
    }
}
