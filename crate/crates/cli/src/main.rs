//! `saddlenet` command line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use saddlenet_cli::config::{ConfigError, ExperimentConfig};
use saddlenet_cli::runner::execute;
use saddlenet_core::{build_topology, TopologyKind};

const EXIT_CONFIG: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_SOLVER: u8 = 5;

#[derive(Parser)]
#[command(
    name = "saddlenet",
    about = "Decentralized minimax optimization over simulated gossip networks",
    long_about = "Decentralized minimax optimization over simulated gossip networks.\n\n\
Exit codes:\n  0  success\n  2  command line usage error\n  3  config error \
(syntax, missing fields, missing files)\n  4  i/o error\n  5  solver/numeric error"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute all (config x seed) runs and write traces plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Replace the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Suppress progress lines.
        #[arg(long, default_value_t = false)]
        quiet: bool,
    },
    /// Print a gossip matrix and its spectral quantities.
    Topology {
        /// complete | ring | path | random_gnp
        #[arg(long)]
        kind: String,
        #[arg(long)]
        m: usize,
        /// Edge probability (random_gnp).
        #[arg(long)]
        prob: Option<f64>,
        /// Sampling seed (random_gnp).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a config without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the fully resolved schedule (eta, p, K, K0, T) for a config.
    Schedule {
        #[arg(long)]
        config: PathBuf,
        /// Seed the schedule is resolved for.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn config_exit(err: &ConfigError) -> u8 {
    match err {
        ConfigError::Io(_) => EXIT_IO,
        ConfigError::Syntax { .. } | ConfigError::Field { .. } => EXIT_CONFIG,
        ConfigError::Core(saddlenet_core::Error::NonFiniteIterate(_)) => EXIT_SOLVER,
        ConfigError::Core(_) => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(config_exit(&err))
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), ConfigError> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            quiet,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = execute(&cfg, out.as_deref(), seed.map(|s| vec![s]), quiet)?;
            for file in &report.trace_files {
                println!("{}", file.display());
            }
            println!("{}", report.summary_file.display());
            Ok(())
        }
        Command::Topology { kind, m, prob, seed } => {
            let kind = match kind.as_str() {
                "complete" => TopologyKind::Complete,
                "ring" => TopologyKind::Ring,
                "path" => TopologyKind::Path,
                "random_gnp" => TopologyKind::RandomGnp {
                    prob: prob.ok_or_else(|| ConfigError::Field {
                        key: "prob".into(),
                        msg: "required for random_gnp".into(),
                    })?,
                    seed,
                },
                other => {
                    return Err(ConfigError::Field {
                        key: "kind".into(),
                        msg: format!("unknown topology {other:?}"),
                    })
                }
            };
            let topo = build_topology(kind, m)?;
            print!("{}", topo.matrix_csv());
            println!("topology = {}", topo.describe());
            println!("lambda2 = {:.12}", topo.lambda2());
            println!("chi = {:.12}", topo.chi());
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            // Constructing the pieces exercises every field, including
            // dataset existence and constant resolution.
            let topo = cfg.build_topology()?;
            let problem = cfg.build_problem()?;
            cfg.build_schedule(&problem, &topo, cfg.seeds[0])?;
            println!("ok: {}", config.display());
            Ok(())
        }
        Command::Schedule { config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let topo = cfg.build_topology()?;
            let problem = cfg.build_problem()?;
            let schedule = cfg.build_schedule(&problem, &topo, seed)?;
            println!("algorithm = {}", cfg.algorithm);
            println!("mode = {}", schedule.mode);
            println!("eta = {:.12e}", schedule.eta);
            println!("p = {:.12e}", schedule.p);
            println!("alpha = {:.12e}", schedule.alpha);
            println!("inner_k = {}", schedule.inner_k);
            println!("warmup_k0 = {}", schedule.warmup_k0);
            println!("total_t = {}", schedule.total_t);
            println!("batch_l = {}", schedule.batch_l);
            println!("seed = {}", schedule.seed);
            println!("problem: L = {:.6e}, mu = {:.6e}, d = {}", problem.smoothness(), problem.strong_convexity(), problem.dim());
            Ok(())
        }
    }
}
