//! Executes (config x seed) runs and writes traces plus a summary.

use std::path::{Path, PathBuf};

use ndarray::Array1;
use saddlenet_core::{run, RunOptions, RunOutcome};

use crate::config::{ConfigError, ConfigResult, ExperimentConfig};
use crate::output::{write_jsonl, write_trace_csv, Aggregate, RunSummary};

/// Result of executing every seed of one config.
pub struct ExecutionReport {
    pub summaries: Vec<RunSummary>,
    pub trace_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
}

fn run_options(cfg: &ExperimentConfig) -> RunOptions {
    RunOptions {
        metric_cadence: cfg.metric_cadence,
        evaluate_at: cfg.evaluate_at,
        tau: cfg.tau,
        track_ergodic: cfg.track_ergodic,
        reference: None,
        stop_grad_norm: cfg.stop_grad_norm,
        stop_dist_sq: None,
    }
}

/// Runs every seed of `cfg`, writing one CSV per run and a JSON-lines
/// summary (`summary.jsonl`) into the output directory.
///
/// `out_override` replaces the config's output directory; `seed_override`
/// replaces its seed list.
pub fn execute(
    cfg: &ExperimentConfig,
    out_override: Option<&Path>,
    seed_override: Option<Vec<u64>>,
    quiet: bool,
) -> ConfigResult<ExecutionReport> {
    let out_dir = out_override
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.output.clone());
    let seeds = seed_override.unwrap_or_else(|| cfg.seeds.clone());

    let topology = cfg.build_topology()?;
    let problem = cfg.build_problem()?;
    let z0 = match &cfg.init_point {
        Some(p) => p.clone(),
        None => Array1::zeros(problem.dim()),
    };
    let options = run_options(cfg);

    let mut summaries = Vec::new();
    let mut trace_files = Vec::new();
    for &seed in &seeds {
        let schedule = cfg.build_schedule(&problem, &topology, seed)?;
        if !quiet {
            eprintln!(
                "running {} on {} ({} agents), seed {seed}, schedule {}",
                cfg.algorithm,
                cfg.problem_kind,
                topology.size(),
                schedule.describe()
            );
        }
        let RunOutcome { trace, .. } = run(
            cfg.algorithm,
            &problem,
            &topology,
            &schedule,
            z0.view(),
            &options,
            None,
        )
        .map_err(ConfigError::Core)?;

        let file = out_dir.join(format!("{}-{}-seed{seed}.csv", cfg.algorithm, cfg.problem_kind));
        write_trace_csv(&trace, &file)
            .map_err(|e| ConfigError::Io(format!("writing {}: {e}", file.display())))?;
        summaries.push(RunSummary::from_trace(&trace, &file));
        trace_files.push(file);
    }

    let summary_file = out_dir.join("summary.jsonl");
    write_jsonl(&summaries, &summary_file)
        .map_err(|e| ConfigError::Io(format!("writing {}: {e}", summary_file.display())))?;
    if summaries.len() > 1 {
        let agg = Aggregate::over(&summaries);
        let line = serde_json::to_string(&agg).expect("serializable aggregate");
        let text = std::fs::read_to_string(&summary_file)
            .map_err(|e| ConfigError::Io(e.to_string()))?;
        std::fs::write(&summary_file, format!("{text}{line}\n"))
            .map_err(|e| ConfigError::Io(e.to_string()))?;
    }

    Ok(ExecutionReport {
        summaries,
        trace_files,
        summary_file,
    })
}
