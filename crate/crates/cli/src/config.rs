//! Flat experiment configs with dotted keys.
//!
//! The format is one `key = value` pair per line, `#` comment lines and
//! blank lines allowed, no sections or nesting, e.g.
//!
//! ```text
//! problem.kind   = quadratic
//! problem.n      = 20
//! topology.kind  = random_gnp
//! topology.m     = 10
//! topology.prob  = 0.5
//! topology.seed  = 1
//! algorithm      = mc-svre
//! schedule.mode  = theory_scsc_unconstrained
//! schedule.epsilon = 1e-8
//! seeds          = 0,1,2
//! output         = runs/demo
//! ```
//!
//! Every key is validated before any computation starts: unknown keys,
//! duplicate keys, missing required fields and missing dataset files are
//! all reported with the offending key or path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use saddlenet_core::{
    build_topology, load_libsvm, make_auc, make_dro, make_quadratic, make_schedule, partition,
    AlgorithmKind, EvalPoint, GossipTopology, SaddleProblem, Schedule, ScheduleMode,
    ScheduleOverrides, TopologyKind,
};

/// Harness-level error: what went wrong and which key/path is involved.
#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Syntax { line: usize, msg: String },
    Field { key: String, msg: String },
    Core(saddlenet_core::Error),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(msg) => write!(f, "io error: {msg}"),
            ConfigError::Syntax { line, msg } => write!(f, "config syntax error at line {line}: {msg}"),
            ConfigError::Field { key, msg } => write!(f, "config field {key:?}: {msg}"),
            ConfigError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

impl From<saddlenet_core::Error> for ConfigError {
    fn from(e: saddlenet_core::Error) -> Self {
        ConfigError::Core(e)
    }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

const KNOWN_KEYS: &[&str] = &[
    "algorithm",
    "problem.kind",
    "problem.m",
    "problem.n",
    "problem.dx",
    "problem.dy",
    "problem.mu",
    "problem.l",
    "problem.seed",
    "problem.dataset",
    "problem.partition_seed",
    "problem.lambda",
    "problem.lambda1",
    "problem.lambda2",
    "problem.lambda3",
    "problem.smoothness_override",
    "topology.kind",
    "topology.m",
    "topology.prob",
    "topology.seed",
    "schedule.mode",
    "schedule.epsilon",
    "schedule.eta",
    "schedule.p",
    "schedule.inner_k",
    "schedule.warmup_k0",
    "schedule.total_t",
    "schedule.batch_l",
    "schedule.dist0_sq",
    "schedule.exact_inner_k",
    "schedule.gt_corrected",
    "seeds",
    "output",
    "init.point",
    "metrics.cadence",
    "metrics.evaluate_at",
    "metrics.tau",
    "metrics.track_ergodic",
    "metrics.stop_grad_norm",
];

/// Parsed and validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmKind,
    pub problem_kind: String,
    pub topology_kind: TopologyKind,
    pub topology_m: usize,
    pub schedule_mode: ScheduleMode,
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub metric_cadence: usize,
    pub evaluate_at: EvalPoint,
    pub tau: f64,
    pub track_ergodic: bool,
    pub stop_grad_norm: Option<f64>,
    pub init_point: Option<Array1<f64>>,
    raw: BTreeMap<String, String>,
    base_dir: PathBuf,
}

fn parse_pairs(text: &str) -> ConfigResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax {
            line: lineno + 1,
            msg: format!("expected `key = value`, got {line:?}"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Syntax {
                line: lineno + 1,
                msg: "empty key or value".into(),
            });
        }
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::Syntax {
                line: lineno + 1,
                msg: format!("unknown key {key:?}"),
            });
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(ConfigError::Syntax {
                line: lineno + 1,
                msg: format!("duplicate key {key:?}"),
            });
        }
    }
    Ok(map)
}

fn field_err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        key: key.to_string(),
        msg: msg.into(),
    }
}

impl ExperimentConfig {
    /// Reads and validates a config file. The dataset path, when present,
    /// is resolved relative to the config file's directory and must exist.
    pub fn load(path: &Path) -> ConfigResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Self::from_text(&text, base_dir)
    }

    pub fn from_text(text: &str, base_dir: PathBuf) -> ConfigResult<Self> {
        let raw = parse_pairs(text)?;
        let get = |key: &str| -> ConfigResult<&String> {
            raw.get(key).ok_or_else(|| field_err(key, "missing required key"))
        };

        let algorithm: AlgorithmKind = get("algorithm")?
            .parse()
            .map_err(|e| field_err("algorithm", format!("{e}")))?;
        let problem_kind = get("problem.kind")?.clone();
        if !["quadratic", "auc", "dro"].contains(&problem_kind.as_str()) {
            return Err(field_err("problem.kind", format!("unknown problem {problem_kind:?}")));
        }

        let topology_m: usize = parse_num(&raw, "topology.m")?
            .ok_or_else(|| field_err("topology.m", "missing required key"))?;
        let topology_kind = match get("topology.kind")?.as_str() {
            "complete" => TopologyKind::Complete,
            "ring" => TopologyKind::Ring,
            "path" => TopologyKind::Path,
            "random_gnp" => {
                let prob: f64 = parse_num(&raw, "topology.prob")?
                    .ok_or_else(|| field_err("topology.prob", "required for random_gnp"))?;
                let seed: u64 = parse_num(&raw, "topology.seed")?.unwrap_or(0);
                TopologyKind::RandomGnp { prob, seed }
            }
            other => return Err(field_err("topology.kind", format!("unknown kind {other:?}"))),
        };

        let schedule_mode: ScheduleMode = get("schedule.mode")?
            .parse()
            .map_err(|e| field_err("schedule.mode", format!("{e}")))?;
        if schedule_mode != ScheduleMode::Manual && raw.get("schedule.epsilon").is_none() {
            return Err(field_err("schedule.epsilon", "required for theory modes"));
        }
        let epsilon: f64 = parse_num(&raw, "schedule.epsilon")?.unwrap_or(0.0);

        let seeds: Vec<u64> = match raw.get("seeds") {
            None => vec![0],
            Some(list) => list
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<u64>()
                        .map_err(|_| field_err("seeds", format!("bad seed {tok:?}")))
                })
                .collect::<ConfigResult<Vec<u64>>>()?,
        };
        if seeds.is_empty() {
            return Err(field_err("seeds", "needs at least one seed"));
        }

        let output = PathBuf::from(get("output")?.clone());

        let metric_cadence: usize = parse_num(&raw, "metrics.cadence")?.unwrap_or(1);
        if metric_cadence == 0 {
            return Err(field_err("metrics.cadence", "must be at least 1"));
        }
        let evaluate_at = match raw.get("metrics.evaluate_at").map(String::as_str) {
            None | Some("mean") => EvalPoint::Mean,
            Some(spec) => match spec.strip_prefix("agent:") {
                Some(idx) => EvalPoint::Agent(idx.parse().map_err(|_| {
                    field_err("metrics.evaluate_at", format!("bad agent index {idx:?}"))
                })?),
                None => {
                    return Err(field_err(
                        "metrics.evaluate_at",
                        format!("expected `mean` or `agent:<i>`, got {spec:?}"),
                    ))
                }
            },
        };
        let tau: f64 = parse_num(&raw, "metrics.tau")?.unwrap_or(0.5);
        if !(tau > 0.0) {
            return Err(field_err("metrics.tau", "must be positive"));
        }
        let track_ergodic = parse_bool(&raw, "metrics.track_ergodic")?.unwrap_or(false);
        let stop_grad_norm = parse_num(&raw, "metrics.stop_grad_norm")?;

        let init_point = match raw.get("init.point") {
            None => None,
            Some(list) => {
                let vals: std::result::Result<Vec<f64>, _> =
                    list.split(',').map(|t| t.trim().parse::<f64>()).collect();
                Some(Array1::from_vec(vals.map_err(|_| {
                    field_err("init.point", "expected comma-separated floats")
                })?))
            }
        };

        let cfg = Self {
            algorithm,
            problem_kind,
            topology_kind,
            topology_m,
            schedule_mode,
            epsilon,
            seeds,
            output,
            metric_cadence,
            evaluate_at,
            tau,
            track_ergodic,
            stop_grad_norm,
            init_point,
            raw,
            base_dir,
        };
        cfg.validate_problem_fields()?;
        Ok(cfg)
    }

    fn validate_problem_fields(&self) -> ConfigResult<()> {
        match self.problem_kind.as_str() {
            "quadratic" => {
                for key in ["problem.n", "problem.dx", "problem.dy", "problem.mu", "problem.l"] {
                    if self.raw.get(key).is_none() {
                        return Err(field_err(key, "required for quadratic problems"));
                    }
                }
            }
            "auc" | "dro" => {
                if self.raw.get("problem.n").is_none() {
                    return Err(field_err("problem.n", "required for data problems"));
                }
                let path = self.dataset_path()?;
                if !path.exists() {
                    return Err(field_err(
                        "problem.dataset",
                        format!("dataset file not found: {}", path.display()),
                    ));
                }
            }
            _ => unreachable!("validated in from_text"),
        }
        Ok(())
    }

    pub fn dataset_path(&self) -> ConfigResult<PathBuf> {
        let rel = self
            .raw
            .get("problem.dataset")
            .ok_or_else(|| field_err("problem.dataset", "required for data problems"))?;
        let p = PathBuf::from(rel);
        Ok(if p.is_absolute() { p } else { self.base_dir.join(p) })
    }

    pub fn problem_m(&self) -> ConfigResult<usize> {
        Ok(parse_num(&self.raw, "problem.m")?.unwrap_or(self.topology_m))
    }

    /// Builds the gossip topology.
    pub fn build_topology(&self) -> ConfigResult<GossipTopology> {
        Ok(build_topology(self.topology_kind, self.topology_m)?)
    }

    /// Builds the problem instance (loading and partitioning the dataset
    /// for the data-driven families).
    pub fn build_problem(&self) -> ConfigResult<SaddleProblem> {
        let m = self.problem_m()?;
        let n: usize = parse_num(&self.raw, "problem.n")?
            .ok_or_else(|| field_err("problem.n", "missing required key"))?;
        let problem = match self.problem_kind.as_str() {
            "quadratic" => {
                let dx = parse_num(&self.raw, "problem.dx")?.unwrap();
                let dy = parse_num(&self.raw, "problem.dy")?.unwrap();
                let mu = parse_num(&self.raw, "problem.mu")?.unwrap();
                let l = parse_num(&self.raw, "problem.l")?.unwrap();
                let seed: u64 = parse_num(&self.raw, "problem.seed")?.unwrap_or(0);
                make_quadratic(m, n, dx, dy, mu, l, seed)?
            }
            "auc" | "dro" => {
                let dataset = load_libsvm(self.dataset_path()?)?;
                let pseed: u64 = parse_num(&self.raw, "problem.partition_seed")?.unwrap_or(0);
                let chunks = partition(&dataset, m, pseed)?;
                if chunks[0].len() < n {
                    return Err(field_err(
                        "problem.n",
                        format!("partition provides {} components per agent, need {n}", chunks[0].len()),
                    ));
                }
                let order: Vec<usize> = chunks
                    .iter()
                    .flat_map(|c| c.iter().take(n).copied())
                    .collect();
                let reordered = dataset.select(&order)?;
                if self.problem_kind == "auc" {
                    let lambda: f64 = parse_num(&self.raw, "problem.lambda")?.unwrap_or(0.01);
                    make_auc(&reordered, m, n, lambda)?
                } else {
                    let lambda1: f64 = parse_num(&self.raw, "problem.lambda1")?.unwrap_or(1.0);
                    let lambda2: f64 = parse_num(&self.raw, "problem.lambda2")?.unwrap_or(0.1);
                    let default_l3 = 1.0 / (n as f64 * n as f64);
                    let lambda3: f64 = parse_num(&self.raw, "problem.lambda3")?.unwrap_or(default_l3);
                    make_dro(&reordered, m, n, lambda1, lambda2, lambda3)?
                }
            }
            _ => unreachable!(),
        };
        Ok(match parse_num::<f64>(&self.raw, "problem.smoothness_override")? {
            Some(l) => problem.with_smoothness(l),
            None => problem,
        })
    }

    /// Resolves the schedule for `seed`.
    pub fn build_schedule(
        &self,
        problem: &SaddleProblem,
        topology: &GossipTopology,
        seed: u64,
    ) -> ConfigResult<Schedule> {
        let overrides = ScheduleOverrides {
            eta: parse_num(&self.raw, "schedule.eta")?,
            p: parse_num(&self.raw, "schedule.p")?,
            inner_k: parse_num(&self.raw, "schedule.inner_k")?,
            warmup_k0: parse_num(&self.raw, "schedule.warmup_k0")?,
            total_t: parse_num(&self.raw, "schedule.total_t")?,
            batch_l: parse_num(&self.raw, "schedule.batch_l")?,
            seed: Some(seed),
            initial_point: self.init_point.clone(),
            dist0_sq: parse_num(&self.raw, "schedule.dist0_sq")?,
            exact_inner_k: parse_bool(&self.raw, "schedule.exact_inner_k")?.unwrap_or(false),
            gt_corrected: parse_bool(&self.raw, "schedule.gt_corrected")?.unwrap_or(false),
        };
        Ok(make_schedule(
            self.algorithm,
            self.schedule_mode,
            problem,
            topology,
            self.epsilon,
            &overrides,
        )?)
    }
}

fn parse_num<T: std::str::FromStr>(
    raw: &BTreeMap<String, String>,
    key: &str,
) -> ConfigResult<Option<T>> {
    match raw.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse::<T>()
            .map(Some)
            .map_err(|_| field_err(key, format!("cannot parse {v:?}"))),
    }
}

fn parse_bool(raw: &BTreeMap<String, String>, key: &str) -> ConfigResult<Option<bool>> {
    match raw.get(key).map(String::as_str) {
        None => Ok(None),
        Some("true") => Ok(Some(true)),
        Some("false") => Ok(Some(false)),
        Some(other) => Err(field_err(key, format!("expected true/false, got {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const QUAD: &str = "\
problem.kind = quadratic
problem.n = 4
problem.dx = 2
problem.dy = 2
problem.mu = 1.0
problem.l = 5.0
topology.kind = ring
topology.m = 3
algorithm = mc-eg
schedule.mode = manual
schedule.eta = 0.02
schedule.total_t = 10
output = runs/demo
";

    #[test]
    fn parses_a_minimal_quadratic_config() {
        let cfg = ExperimentConfig::from_text(QUAD, PathBuf::from(".")).unwrap();
        assert_eq!(cfg.algorithm, AlgorithmKind::McEg);
        assert_eq!(cfg.topology_m, 3);
        assert_eq!(cfg.seeds, vec![0]);
        let topo = cfg.build_topology().unwrap();
        let problem = cfg.build_problem().unwrap();
        let schedule = cfg.build_schedule(&problem, &topo, 7).unwrap();
        assert_eq!(schedule.total_t, 10);
        assert_eq!(schedule.seed, 7);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        let bad = format!("{QUAD}nonsense.key = 1\n");
        assert!(matches!(
            ExperimentConfig::from_text(&bad, PathBuf::from(".")),
            Err(ConfigError::Syntax { .. })
        ));

        let dup = format!("{QUAD}algorithm = desm\n");
        assert!(matches!(
            ExperimentConfig::from_text(&dup, PathBuf::from(".")),
            Err(ConfigError::Syntax { .. })
        ));
    }

    #[test]
    fn missing_fields_are_named() {
        let text = QUAD.replace("problem.mu = 1.0\n", "");
        match ExperimentConfig::from_text(&text, PathBuf::from(".")) {
            Err(ConfigError::Field { key, .. }) => assert_eq!(key, "problem.mu"),
            other => panic!("expected field error, got {other:?}"),
        }
    }

    #[test]
    fn missing_dataset_is_reported_with_path() {
        let text = "\
problem.kind = auc
problem.n = 10
problem.dataset = does-not-exist.libsvm
topology.kind = complete
topology.m = 2
algorithm = mc-svre
schedule.mode = manual
schedule.eta = 0.01
schedule.total_t = 5
output = runs/x
";
        match ExperimentConfig::from_text(text, PathBuf::from("/tmp")) {
            Err(ConfigError::Field { key, msg }) => {
                assert_eq!(key, "problem.dataset");
                assert!(msg.contains("does-not-exist.libsvm"), "message must name the path: {msg}");
            }
            other => panic!("expected dataset error, got {other:?}"),
        }
    }

    #[test]
    fn theory_mode_requires_epsilon() {
        let text = QUAD
            .replace("schedule.mode = manual", "schedule.mode = theory_scsc_unconstrained")
            .replace("schedule.eta = 0.02\n", "")
            .replace("schedule.total_t = 10\n", "");
        match ExperimentConfig::from_text(&text, PathBuf::from(".")) {
            Err(ConfigError::Field { key, .. }) => assert_eq!(key, "schedule.epsilon"),
            other => panic!("expected epsilon error, got {other:?}"),
        }
    }
}
