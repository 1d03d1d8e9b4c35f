//! `ugnn`: synthetic data, graph construction, training, sampling,
//! evaluation and plotting for graph diffusion forecasts.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ugnn::Error;

#[derive(Parser, Debug)]
#[command(name = "ugnn", version, about = "Graph diffusion forecasting of stock log returns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic prices CSV (and optionally fundamentals).
    Synth(SynthArgs),
    /// Build a correlation adjacency from a fundamentals CSV.
    Graph(GraphArgs),
    /// Train a model from a TOML config and write a checkpoint.
    Train(TrainArgs),
    /// Sample forecast ensembles for the windows of one split.
    Sample(SampleArgs),
    /// Score ensembles (and the GRW baseline) into a metrics CSV.
    Evaluate(EvaluateArgs),
    /// Render an ensemble CSV as an SVG with 95% bands.
    Plot(PlotArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Process {
    Grw,
    GraphVar,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "graph_var")]
    process: Process,
    #[arg(long, default_value_t = 20)]
    n_stocks: usize,
    /// Number of price days (one more than the number of returns).
    #[arg(long, default_value_t = 1500)]
    days: usize,
    #[arg(long, default_value_t = 0.4)]
    rho: f64,
    #[arg(long, default_value_t = 0.02)]
    sigma: f64,
    #[arg(long, default_value_t = 0.0005)]
    mu: f64,
    /// Adjacency CSV coupling the returns; synthesized from fundamentals if absent.
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    n_indicators: usize,
    #[arg(long, default_value_t = 4)]
    n_sectors: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the synthetic fundamentals CSV.
    #[arg(long)]
    fundamentals_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GraphArgs {
    #[arg(long)]
    fundamentals: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `data.t_p`.
    #[arg(long)]
    tp: Option<usize>,
    /// Overrides `data.t_h`.
    #[arg(long)]
    th: Option<usize>,
    /// Overrides `train.max_epochs`.
    #[arg(long)]
    max_epochs: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    /// Only this window of the split.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long, default_value_t = 20)]
    ntraj: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Mode {
    Cumulative,
    PerDay,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory written by `sample`.
    #[arg(long, conflicts_with = "prices")]
    ensembles: Option<PathBuf>,
    /// Score only the GRW baseline on every window of a prices CSV.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    tp: usize,
    #[arg(long, default_value_t = 10)]
    th: usize,
    #[arg(long, default_value_t = 1)]
    window_stride: usize,
    /// GRW trajectories per window; defaults to the ensemble size (20 with --prices).
    #[arg(long)]
    ntraj: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "cumulative")]
    mode: Mode,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// A `window_XXXX.csv` written by `sample`.
    #[arg(long)]
    ensemble: PathBuf,
    /// Realized path; defaults to the sibling `.target.csv` when present.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Comma-separated node indices.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    nodes: Vec<usize>,
    #[arg(long, value_enum, default_value = "cumulative")]
    mode: Mode,
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::Contract(_) => 1,
        Error::Numeric(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Graph(a) => commands::graph(a),
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
