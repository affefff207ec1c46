use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};
use log::error;

use restlink::experiment::{
    report, run_experiment, ExperimentError, ExperimentPlan, LiveTarget, SutSource,
};
use restlink::search::{Algorithm, Budget};

#[derive(Parser)]
#[command(
    name = "restlink",
    version,
    about = "Search-based test generation for REST APIs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (algorithm, seed) pair and write a result bundle.
    #[command(group(ArgGroup::new("source").required(true).args(["scenario", "live"])))]
    #[command(group(ArgGroup::new("budget").args(["budget_evals", "budget_seconds"])))]
    Run {
        /// Simulated service scenario (JSON).
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Live service config (JSON with base_url, reset_url, service, literals).
        #[arg(long)]
        live: Option<PathBuf>,
        /// Comma-separated subset of lt-mosa, mosa, mio.
        #[arg(long, value_delimiter = ',', default_value = "lt-mosa,mosa,mio")]
        algorithms: Vec<Algorithm>,
        /// Repetitions per algorithm.
        #[arg(long, default_value_t = 20)]
        reps: u32,
        /// Evaluations per run (default 20000).
        #[arg(long)]
        budget_evals: Option<u64>,
        /// Wall-clock seconds per run, instead of an evaluation budget.
        #[arg(long)]
        budget_seconds: Option<f64>,
        /// Seed of the first repetition; repetition r uses seed + r.
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Output directory for the bundle.
        #[arg(long)]
        out: PathBuf,
        /// Parallel runs (default: all cores; live services always use 1).
        #[arg(long)]
        jobs: Option<usize>,
        /// Write every learned linkage tree next to the run's event log.
        #[arg(long)]
        dump_linkage_tree: bool,
    },
    /// Print coverage, fault, AUC and significance tables for a bundle.
    Report { dir: PathBuf },
}

fn load_live(path: &PathBuf) -> Result<LiveTarget, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
        path: path.clone(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.clone(),
        source,
    })
}

fn execute(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run {
            scenario,
            live,
            algorithms,
            reps,
            budget_evals,
            budget_seconds,
            seed,
            out,
            jobs,
            dump_linkage_tree,
        } => {
            let source = match (scenario, live) {
                (Some(path), _) => SutSource::Scenario(path),
                (None, Some(path)) => SutSource::Live(load_live(&path)?),
                (None, None) => unreachable!("clap requires a source"),
            };
            let budget = match budget_seconds {
                Some(s) => Budget::Seconds(s),
                None => Budget::Evaluations(budget_evals.unwrap_or(20_000)),
            };
            let plan = ExperimentPlan {
                source,
                algorithms,
                repetitions: reps,
                budget,
                seed_base: seed,
                out,
                jobs,
                dump_linkage_tree,
            };
            let summary = run_experiment(&plan)?;
            print!("{}", restlink::experiment::render(&summary));
            Ok(())
        }
        Command::Report { dir } => {
            print!("{}", report(&dir)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
