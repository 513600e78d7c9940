//! `atg`: sector generation, encoding, verification, baselines, benchmark
//! runs, refinement, reports and prompt inspection.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "atg", version, about = "Air traffic scenario generation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic sector suite for benchmark parameter points.
    GenSectors(GenSectorsArgs),
    /// Encode a continuous route/fix description into a discrete sector graph.
    Encode(EncodeArgs),
    /// Detect interactions and validate a scenario against a sector.
    Verify(VerifyArgs),
    /// Estimate the random-scenario baseline for one parameter point.
    Baseline(BaselineArgs),
    /// Run a benchmark for every model in a models file.
    Bench(BenchArgs),
    /// Run the feedback loop for one model on one sector.
    Refine(RefineArgs),
    /// Write benchmark tables, skills.csv and pareto.csv from a store.
    Report(ReportArgs),
    /// Print a prompt without sending it.
    Prompt(PromptArgs),
}

/// Selects parameter points and the sector suite behind them.
#[derive(Debug, Args)]
struct SuiteArgs {
    /// traffic_volume, scenario_length, sector_complexity, controllability,
    /// or `all` where several benchmarks make sense.
    #[arg(long)]
    benchmark: String,
    /// Swept parameter values; the benchmark's full sweep when omitted.
    #[arg(long = "value", value_delimiter = ',')]
    values: Vec<u32>,
    /// Seed for sector generation.
    #[arg(long = "suite-seed", visible_alias = "seed", default_value_t = 0)]
    suite_seed: u64,
    #[arg(long, default_value_t = 10)]
    n_sectors: usize,
}

/// Departures from the benchmark's fixed parameters.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    routes: Option<u32>,
    #[arg(long)]
    intersections: Option<u32>,
    #[arg(long)]
    aircraft: Option<u32>,
    #[arg(long)]
    duration: Option<u32>,
}

#[derive(Debug, Args)]
struct GenSectorsArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value = "sectors")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EncodeArgs {
    /// JSON `{ "fixes": {name: [x, y]}, "routes": {id: [fix, ...]} }` in nmi.
    #[arg(long)]
    input: PathBuf,
    /// Sector JSON destination; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value_t = 20.0)]
    spacing: f64,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    sector: PathBuf,
    #[arg(long)]
    scenario: PathBuf,
    /// Check the scenario against this benchmark's parameters.
    #[arg(long, requires = "value")]
    benchmark: Option<String>,
    #[arg(long)]
    value: Option<u32>,
    /// Steps after spawn during which interactions are flagged.
    #[arg(long, default_value_t = 1)]
    grace: u32,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long)]
    benchmark: String,
    #[arg(long)]
    value: u32,
    /// Seed for sector generation and sampling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_sectors: usize,
    /// Total samples spread round-robin over the sectors.
    #[arg(long, default_value_t = 500, conflicts_with = "samples_per_sector")]
    samples: usize,
    /// Draw this many samples from every sector instead.
    #[arg(long)]
    samples_per_sector: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    /// JSON file `{ "models": [ProviderConfig, ...] }`.
    #[arg(long)]
    models: PathBuf,
    #[arg(long, default_value = "results/store.jsonl")]
    store: PathBuf,
    /// Concurrent requests per model and worker threads.
    #[arg(long)]
    max_inflight: Option<usize>,
    /// Continue an existing store, skipping cells already present.
    #[arg(long)]
    resume: bool,
    /// With --resume, issue failed cells again.
    #[arg(long)]
    retry_failed: bool,
    #[arg(long, default_value_t = 500)]
    baseline_samples: usize,
    /// Baseline samples are per sector rather than in total.
    #[arg(long)]
    samples_per_sector: bool,
    /// Template directory; falls back to $ATG_TEMPLATES, then the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RefineArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    models: PathBuf,
    /// Model name from the models file; the first entry when omitted.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value_t = 0)]
    sector_index: usize,
    /// Feedback rounds after the initial attempt.
    #[arg(long, default_value_t = 3)]
    rounds: u32,
    /// Template directory; falls back to $ATG_TEMPLATES, then the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long, default_value = "results/store.jsonl")]
    store: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Rewrite the store with one line per cell first.
    #[arg(long)]
    compact: bool,
}

#[derive(Debug, Args)]
struct PromptArgs {
    #[command(flatten)]
    suite: SuiteArgs,
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long, default_value_t = 0)]
    sector_index: usize,
    /// Use this sector file instead of the generated suite.
    #[arg(long)]
    sector: Option<PathBuf>,
    /// Template directory; falls back to $ATG_TEMPLATES, then the built-in set.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Free-text request: print the controllability prompt for it.
    #[arg(long, conflicts_with = "feedback_for")]
    spec: Option<String>,
    /// Include flight levels in the controllability prompt.
    #[arg(long = "3d", requires = "spec")]
    three_d: bool,
    /// Existing scenario to modify (controllability prompt).
    #[arg(long, requires = "spec")]
    existing: Option<PathBuf>,
    /// Print the feedback prompt for this scenario.
    #[arg(long)]
    feedback_for: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(1)
        }
    }
}
