//! Trace serialization: per-run CSV files and a JSON-lines summary.

use std::io::Write;
use std::path::Path;

use saddlenet_core::{RunTrace, TraceRow};
use serde::Serialize;

pub const CSV_HEADER: &str =
    "t,epoch,comm_rounds,grad_norm,grad_mapping_norm,consensus_err,dist_to_saddle,ergodic_gap";

/// 17 significant digits: round-trips f64 exactly.
fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// Renders a trace as CSV text (header plus one row per recorded
/// iteration; missing optional metrics stay empty).
pub fn trace_to_csv(trace: &RunTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.t,
            fmt(row.epoch),
            row.comm_rounds,
            fmt(row.grad_norm),
            fmt(row.grad_mapping_norm),
            fmt(row.consensus_err),
            fmt_opt(row.dist_to_saddle),
            fmt_opt(row.ergodic_gap),
        ));
    }
    out
}

pub fn write_trace_csv(trace: &RunTrace, path: &Path) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, trace_to_csv(trace))
}

/// Parses a CSV produced by [`trace_to_csv`] back into rows; numeric
/// fields round-trip exactly.
pub fn parse_trace_csv(text: &str) -> Result<Vec<TraceRow>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty file")?;
    if header != CSV_HEADER {
        return Err(format!("unexpected header {header:?}"));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 8 {
            return Err(format!("line {}: expected 8 columns, got {}", lineno + 2, cols.len()));
        }
        let num = |s: &str| -> Result<f64, String> {
            s.parse::<f64>().map_err(|e| format!("line {}: {e}", lineno + 2))
        };
        let opt = |s: &str| -> Result<Option<f64>, String> {
            if s.is_empty() { Ok(None) } else { num(s).map(Some) }
        };
        rows.push(TraceRow {
            t: cols[0].parse().map_err(|e| format!("line {}: {e}", lineno + 2))?,
            epoch: num(cols[1])?,
            comm_rounds: cols[2].parse().map_err(|e| format!("line {}: {e}", lineno + 2))?,
            grad_norm: num(cols[3])?,
            grad_mapping_norm: num(cols[4])?,
            consensus_err: num(cols[5])?,
            dist_to_saddle: opt(cols[6])?,
            ergodic_gap: opt(cols[7])?,
        });
    }
    Ok(rows)
}

/// One summary line per completed run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub algorithm: String,
    pub problem: String,
    pub topology: String,
    pub schedule: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub final_grad_mapping_norm: f64,
    pub final_consensus_err: f64,
    pub final_dist_to_saddle: Option<f64>,
    pub final_ergodic_gap: Option<f64>,
    pub total_sfo_per_agent: f64,
    pub total_comm_rounds: u64,
    pub metric_oracle_calls: u64,
    pub trace_file: String,
}

impl RunSummary {
    pub fn from_trace(trace: &RunTrace, trace_file: &Path) -> Self {
        let last = trace.rows.last().expect("trace has at least the init row");
        let n_as_epochs = last.epoch; // epochs are sfo/n already
        Self {
            algorithm: trace.meta.algorithm.clone(),
            problem: trace.meta.problem.clone(),
            topology: trace.meta.topology.clone(),
            schedule: trace.meta.schedule.clone(),
            seed: trace.meta.seed,
            iterations: last.t,
            final_grad_norm: last.grad_norm,
            final_grad_mapping_norm: last.grad_mapping_norm,
            final_consensus_err: last.consensus_err,
            final_dist_to_saddle: last.dist_to_saddle,
            final_ergodic_gap: last.ergodic_gap,
            total_sfo_per_agent: n_as_epochs,
            total_comm_rounds: last.comm_rounds,
            metric_oracle_calls: trace.meta.metric_oracle_calls,
            trace_file: trace_file.display().to_string(),
        }
    }
}

/// Mean/min/max of the final metrics across seeds.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub record: &'static str,
    pub runs: usize,
    pub final_grad_norm_mean: f64,
    pub final_grad_norm_min: f64,
    pub final_grad_norm_max: f64,
    pub final_consensus_err_mean: f64,
    pub final_consensus_err_min: f64,
    pub final_consensus_err_max: f64,
}

impl Aggregate {
    pub fn over(summaries: &[RunSummary]) -> Self {
        let stats = |vals: Vec<f64>| -> (f64, f64, f64) {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (mean, min, max)
        };
        let (gm, gmin, gmax) = stats(summaries.iter().map(|s| s.final_grad_norm).collect());
        let (cm, cmin, cmax) = stats(summaries.iter().map(|s| s.final_consensus_err).collect());
        Self {
            record: "aggregate",
            runs: summaries.len(),
            final_grad_norm_mean: gm,
            final_grad_norm_min: gmin,
            final_grad_norm_max: gmax,
            final_consensus_err_mean: cm,
            final_consensus_err_min: cmin,
            final_consensus_err_max: cmax,
        }
    }
}

/// Appends JSON lines to `path`, one per record.
pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::fs::File::create(path)?;
    for r in records {
        let line = serde_json::to_string(r).expect("serializable record");
        writeln!(file, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use saddlenet_core::{TraceMeta, TraceRow};

    fn toy_trace() -> RunTrace {
        RunTrace {
            rows: vec![
                TraceRow {
                    t: 0,
                    epoch: 1.0,
                    comm_rounds: 5,
                    grad_norm: 0.1234567890123456789,
                    grad_mapping_norm: 1.0 / 3.0,
                    consensus_err: 2e-17,
                    dist_to_saddle: None,
                    ergodic_gap: None,
                },
                TraceRow {
                    t: 3,
                    epoch: 1.5,
                    comm_rounds: 17,
                    grad_norm: 9.87e-5,
                    grad_mapping_norm: 9.87e-5,
                    consensus_err: 0.0,
                    dist_to_saddle: Some(std::f64::consts::PI),
                    ergodic_gap: Some(-1.25e-9),
                },
            ],
            meta: TraceMeta {
                algorithm: "mc-eg".into(),
                problem: "quadratic".into(),
                topology: "{kind=ring, m=3}".into(),
                schedule: "{}".into(),
                seed: 0,
                metric_oracle_calls: 12,
            },
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let trace = toy_trace();
        let text = trace_to_csv(&trace);
        assert!(text.starts_with(CSV_HEADER));
        let rows = parse_trace_csv(&text).unwrap();
        assert_eq!(rows.len(), 2);
        for (a, b) in rows.iter().zip(trace.rows.iter()) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.comm_rounds, b.comm_rounds);
            assert_eq!(a.epoch.to_bits(), b.epoch.to_bits());
            assert_eq!(a.grad_norm.to_bits(), b.grad_norm.to_bits());
            assert_eq!(a.grad_mapping_norm.to_bits(), b.grad_mapping_norm.to_bits());
            assert_eq!(a.consensus_err.to_bits(), b.consensus_err.to_bits());
            assert_eq!(
                a.dist_to_saddle.map(f64::to_bits),
                b.dist_to_saddle.map(f64::to_bits)
            );
            assert_eq!(a.ergodic_gap.map(f64::to_bits), b.ergodic_gap.map(f64::to_bits));
        }
    }

    #[test]
    fn missing_optionals_render_empty() {
        let text = trace_to_csv(&toy_trace());
        let first_row = text.lines().nth(1).unwrap();
        assert!(first_row.ends_with(",,"), "row should end with two empty columns: {first_row}");
    }
}
