//! Command-line surface: generate benchmark datasets, run episodes under a
//! chosen topology and backend, evaluate traces, and render reports.

mod commands;
mod config;

use clap::{Parser, Subcommand};

use commands::{cmd_eval, cmd_generate, cmd_run};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "workbench",
    about = "Agentic workbench for simulated 3D neuro-imaging analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a phantom benchmark dataset (volumes + items + manifest).
    Generate {
        /// Output directory for the dataset.
        #[arg(long)]
        out: std::path::PathBuf,
        /// Items per tier, e.g. "43,565,267"; "default" or "tiny".
        #[arg(long, default_value = "default")]
        profile: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Config file (flat key = value); command-line flags win.
        #[arg(long)]
        config: Option<std::path::PathBuf>,
    },
    /// Run episodes over a dataset and write trace streams.
    Run {
        #[arg(long)]
        dataset: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Topology to run (repeatable); defaults to all four.
        #[arg(long = "topology")]
        topologies: Vec<String>,
        /// scripted, planner, or remote:<model>.
        #[arg(long, default_value = "scripted")]
        backend: String,
        /// Model name for remote backends (alternative to remote:<model>).
        #[arg(long)]
        model: Option<String>,
        /// Endpoint URL for remote backends.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value_t = 40)]
        budget: usize,
        /// Boundary-noise level in [0, 1].
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker pool size.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Fixed delay between cases (rate limiting for remote backends).
        #[arg(long, default_value_t = 0)]
        delay_seconds: u64,
        /// Price table file (lines of "<model> = <in>, <out>" cents per Mtok).
        #[arg(long)]
        prices: Option<std::path::PathBuf>,
        #[arg(long)]
        config: Option<std::path::PathBuf>,
    },
    /// Evaluate trace streams against a dataset and render report tables.
    Eval {
        #[arg(long)]
        traces: std::path::PathBuf,
        #[arg(long)]
        dataset: std::path::PathBuf,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
        #[arg(long)]
        prices: Option<std::path::PathBuf>,
        #[arg(long)]
        config: Option<std::path::PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Generate {
            out,
            profile,
            seed,
            config,
        } => cmd_generate(out, profile, seed, config),
        Command::Run {
            dataset,
            out,
            topologies,
            backend,
            model,
            endpoint,
            budget,
            noise,
            seed,
            parallel,
            delay_seconds,
            prices,
            config,
        } => {
            let run_config = RunConfig {
                dataset,
                out,
                topologies,
                backend,
                model,
                endpoint,
                budget,
                noise,
                seed,
                parallel,
                delay_seconds,
                prices,
            };
            cmd_run(run_config, config)
        }
        Command::Eval {
            traces,
            dataset,
            out,
            prices,
            config,
        } => cmd_eval(traces, dataset, out, prices, config),
    };
    std::process::exit(code);
}
