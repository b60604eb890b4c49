use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lightningnet::experiment::{
    run_profile, write_profile_csv, Experiment, ExperimentConfig, Overrides, Stage, StageStatus, TrackingAllocator,
};
use lightningnet::experiment::artifacts::PROFILE_CSV;
use lightningnet::Error;

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

/// Graph-partitioned hot-spot forecasting experiments.
#[derive(Parser)]
#[command(name = "lightningnet", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic network, KPI feed, and hot labels.
    Gen,
    /// Impute, select features, and normalise the KPI panel.
    Prep,
    /// Split the cell graph into k sub-graphs and rank them.
    Partition,
    /// Train one sub-classifier (and the baselines) per sub-graph.
    Train,
    /// Evaluate every sub-classifier on every sub-graph.
    Crosseval,
    /// Train the hierarchical models and apply the fallback rule.
    Ensemble,
    /// Write report.json from the stage outputs.
    Report,
    /// Run every stage, skipping those already up to date.
    Run,
    /// Time and measure memory of short training runs over a size grid.
    Profile,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "lightningnet.toml")]
    config: PathBuf,
    /// Run directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; every generator and model derives its stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Memory buffer in hours.
    #[arg(long, global = true)]
    mb: Option<usize>,
    /// Forecast horizon in hours.
    #[arg(long, global = true)]
    hz: Option<usize>,
    /// Adjacency distance threshold in km.
    #[arg(long = "threshold-km", global = true)]
    threshold_km: Option<f64>,
    /// Number of sub-graphs.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

fn stage_of(cmd: &Command) -> Option<Stage> {
    Some(match cmd {
        Command::Gen => Stage::Gen,
        Command::Prep => Stage::Prep,
        Command::Partition => Stage::Partition,
        Command::Train => Stage::Train,
        Command::Crosseval => Stage::CrossEval,
        Command::Ensemble => Stage::Ensemble,
        Command::Report => Stage::Report,
        Command::Run | Command::Profile => return None,
    })
}

fn print_status(stage: Stage, status: StageStatus) {
    let what = match status {
        StageStatus::Ran => "done",
        StageStatus::UpToDate => "up to date",
    };
    println!("{stage}: {what}");
}

fn execute(cli: &Cli) -> lightningnet::Result<()> {
    let c = &cli.common;
    let overrides = Overrides {
        seed: c.seed,
        out_dir: c.out.clone(),
        mb: c.mb,
        hz: c.hz,
        threshold_km: c.threshold_km,
        k: c.k,
    };
    let config = ExperimentConfig::load(&c.config, &overrides)?;
    let mut exp = Experiment::new(config);
    if let Some(dir) = &c.out {
        exp.dir = dir.clone();
    }
    if c.jobs == Some(0) {
        return Err(Error::validation("--jobs must be >= 1"));
    }
    exp.jobs = c.jobs;
    match &cli.command {
        Command::Run => {
            for stage in Stage::ALL {
                print_status(stage, exp.run_stage(stage)?);
            }
        }
        Command::Profile => {
            let records = run_profile(&exp.config)?;
            let path = exp.path(PROFILE_CSV);
            write_profile_csv(&records, &path)?;
            println!("profile: {} records written to {}", records.len(), path.display());
        }
        cmd => {
            let stage = stage_of(cmd).expect("single-stage command");
            print_status(stage, exp.run_stage(stage)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.common.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
