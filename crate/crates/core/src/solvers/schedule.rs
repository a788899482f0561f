//! Step-size and consensus-round schedules.
//!
//! Theory modes fill every field from the problem constants: the step size
//! is `1/(6 sqrt(n) L)` for MC-SVRE and `1/(6L)` for the extragradient
//! family, the snapshot probability is `p = l/(2n)` with momentum
//! `alpha = 1 - p`, and the consensus rounds `K`, `K0` take the
//! `ceil(sqrt(chi) log(...))` shape. Every field can be overridden; manual
//! mode bypasses the formulas entirely.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::gossip::{mixing_rounds_for_target, GossipTopology};
use crate::problems::SaddleProblem;
use crate::solvers::AlgorithmKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    Manual,
    TheoryScscUnconstrained,
    TheoryScscConstrained,
    TheoryCc,
}

impl std::fmt::Display for ScheduleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            ScheduleMode::Manual => "manual",
            ScheduleMode::TheoryScscUnconstrained => "theory_scsc_unconstrained",
            ScheduleMode::TheoryScscConstrained => "theory_scsc_constrained",
            ScheduleMode::TheoryCc => "theory_cc",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for ScheduleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(ScheduleMode::Manual),
            "theory_scsc_unconstrained" => Ok(ScheduleMode::TheoryScscUnconstrained),
            "theory_scsc_constrained" => Ok(ScheduleMode::TheoryScscConstrained),
            "theory_cc" => Ok(ScheduleMode::TheoryCc),
            other => Err(Error::InvalidConstants(format!("unknown schedule mode {other:?}"))),
        }
    }
}

/// Fully resolved run parameters.
#[derive(Debug, Clone)]
pub struct Schedule {
    /// Step size `eta`.
    pub eta: f64,
    /// Snapshot refresh probability (MC-SVRE only).
    pub p: f64,
    /// Momentum `alpha = 1 - p` (MC-SVRE only).
    pub alpha: f64,
    /// Consensus rounds per FastMix call.
    pub inner_k: u32,
    /// Consensus rounds spent mixing the initial gradients.
    pub warmup_k0: u32,
    /// Outer iterations.
    pub total_t: usize,
    /// Mini-batch size `l`; 1 recovers the single-sample estimator.
    pub batch_l: usize,
    pub seed: u64,
    pub mode: ScheduleMode,
    /// Apply gossip in the half step of GT-EG (off reproduces the printed
    /// update rule, which mixes only the full steps).
    pub gt_corrected: bool,
}

impl Schedule {
    pub fn describe(&self) -> String {
        format!(
            "{{mode={}, eta={:.6e}, p={:.6e}, alpha={:.6e}, K={}, K0={}, T={}, l={}, seed={}}}",
            self.mode,
            self.eta,
            self.p,
            self.alpha,
            self.inner_k,
            self.warmup_k0,
            self.total_t,
            self.batch_l,
            self.seed
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::InvalidConstants(format!("eta must be positive, got {}", self.eta)));
        }
        if self.inner_k < 1 || self.total_t < 1 || self.batch_l < 1 {
            return Err(Error::InvalidConstants(
                "inner_k, total_t and batch_l must be at least 1".into(),
            ));
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(Error::InvalidConstants(format!("p must lie in (0, 1], got {}", self.p)));
        }
        Ok(())
    }
}

/// Optional field-by-field overrides applied after the mode formulas.
#[derive(Debug, Clone, Default)]
pub struct ScheduleOverrides {
    pub eta: Option<f64>,
    pub p: Option<f64>,
    pub inner_k: Option<u32>,
    pub warmup_k0: Option<u32>,
    pub total_t: Option<usize>,
    pub batch_l: Option<usize>,
    pub seed: Option<u64>,
    /// Start point used to size `K0` and `T`; defaults to the projected
    /// origin.
    pub initial_point: Option<Array1<f64>>,
    /// `||zbar_0 - z*||^2` when no saddle is known.
    pub dist0_sq: Option<f64>,
    /// Use the exact constant in the MC-SVRE unconstrained `K`
    /// (`C = 8 L eta (2 kappa + 3 L eta)/m`, `c2 = 3/p`) instead of the
    /// default `log(kappa n)` shape.
    pub exact_inner_k: bool,
    pub gt_corrected: bool,
}

/// Resolves a schedule for `algorithm` on `problem` over `topology`.
///
/// `epsilon` is the target accuracy the theory formulas are evaluated at;
/// it is ignored in manual mode.
pub fn make_schedule(
    algorithm: AlgorithmKind,
    mode: ScheduleMode,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    epsilon: f64,
    overrides: &ScheduleOverrides,
) -> Result<Schedule> {
    let n = problem.components_per_agent() as f64;
    let batch_l = overrides.batch_l.unwrap_or(1);
    if batch_l < 1 || batch_l > problem.components_per_agent() {
        return Err(Error::InvalidConstants(format!(
            "batch size {batch_l} outside 1..={}",
            problem.components_per_agent()
        )));
    }
    let p = overrides.p.unwrap_or(batch_l as f64 / (2.0 * n));
    let seed = overrides.seed.unwrap_or(0);

    if mode == ScheduleMode::Manual {
        let schedule = Schedule {
            eta: overrides
                .eta
                .ok_or_else(|| Error::MissingConstant("eta (required in manual mode)".into()))?,
            p,
            alpha: 1.0 - p,
            inner_k: overrides.inner_k.unwrap_or(1),
            warmup_k0: overrides.warmup_k0.unwrap_or(overrides.inner_k.unwrap_or(1)),
            total_t: overrides
                .total_t
                .ok_or_else(|| Error::MissingConstant("total_t (required in manual mode)".into()))?,
            batch_l,
            seed,
            mode,
            gt_corrected: overrides.gt_corrected,
        };
        schedule.validate()?;
        return Ok(schedule);
    }

    if !(epsilon > 0.0) {
        return Err(Error::InvalidConstants(format!(
            "theory modes need a positive epsilon, got {epsilon}"
        )));
    }
    let l_smooth = problem.smoothness();
    if !(l_smooth > 0.0) {
        return Err(Error::MissingConstant("L (problem smoothness)".into()));
    }
    let scsc = matches!(
        mode,
        ScheduleMode::TheoryScscUnconstrained | ScheduleMode::TheoryScscConstrained
    );
    let mu = problem.strong_convexity();
    if scsc && !(mu > 0.0) {
        return Err(Error::MissingConstant("mu (required for SC-SC modes)".into()));
    }
    let kappa = if mu > 0.0 { l_smooth / mu } else { f64::INFINITY };
    let chi = topology.chi();

    let eta = match algorithm {
        AlgorithmKind::McSvre => 1.0 / (6.0 * n.sqrt() * l_smooth),
        AlgorithmKind::McEg | AlgorithmKind::EgCentral | AlgorithmKind::Desm => {
            1.0 / (6.0 * l_smooth)
        }
        AlgorithmKind::GtEg => {
            // eta2 = (1/(kappa chi^2 L) v 1/(kappa^{1/3} chi^{4/3} L)) ^ 1/(chi^2 L)
            let a = 1.0 / (kappa * chi * chi * l_smooth);
            let b = 1.0 / (kappa.cbrt() * chi.powf(4.0 / 3.0) * l_smooth);
            a.max(b).min(1.0 / (chi * chi * l_smooth))
        }
    };

    // Distance from the start mean to the saddle, for T and K0 sizing.
    let z0 = initial_point(problem, overrides)?;
    let dist0_sq = resolve_dist0_sq(problem, overrides, &z0)?;

    let inner_k = match algorithm {
        AlgorithmKind::McSvre => match mode {
            ScheduleMode::TheoryScscUnconstrained => {
                if overrides.exact_inner_k {
                    let m = problem.agents() as f64;
                    let big_c = 8.0 * l_smooth * eta * (2.0 * kappa + 3.0 * l_smooth * eta) / m;
                    let c2 = 3.0 / p;
                    let arg = (12.0 * m * n * c2 * big_c).sqrt().max(291.0f64.sqrt());
                    mixing_rounds_for_target(topology, arg)
                } else {
                    mixing_rounds_for_target(topology, kappa * n)
                }
            }
            ScheduleMode::TheoryScscConstrained => {
                mixing_rounds_for_target(topology, kappa * n / epsilon)
            }
            _ => mixing_rounds_for_target(topology, n * l_smooth / epsilon),
        },
        AlgorithmKind::McEg | AlgorithmKind::EgCentral => match mode {
            ScheduleMode::TheoryScscUnconstrained => mixing_rounds_for_target(topology, kappa),
            ScheduleMode::TheoryScscConstrained => {
                mixing_rounds_for_target(topology, kappa / epsilon)
            }
            _ => mixing_rounds_for_target(topology, l_smooth / epsilon),
        },
        // GT-EG and DESM gossip once per half step; K is unused.
        AlgorithmKind::GtEg | AlgorithmKind::Desm => 1,
    };

    let warmup_k0 = resolve_warmup(
        algorithm, mode, problem, topology, epsilon, &z0, kappa, l_smooth, inner_k,
    );

    let total_t = match overrides.total_t {
        Some(t) => t,
        None => resolve_total_t(algorithm, mode, n, kappa, l_smooth, mu, eta, dist0_sq, epsilon)?,
    };

    let schedule = Schedule {
        eta: overrides.eta.unwrap_or(eta),
        p,
        alpha: 1.0 - p,
        inner_k: overrides.inner_k.unwrap_or(inner_k),
        warmup_k0: overrides.warmup_k0.unwrap_or(warmup_k0),
        total_t,
        batch_l,
        seed,
        mode,
        gt_corrected: overrides.gt_corrected,
    };
    schedule.validate()?;
    Ok(schedule)
}

fn initial_point(problem: &SaddleProblem, overrides: &ScheduleOverrides) -> Result<Array1<f64>> {
    match &overrides.initial_point {
        Some(z) => {
            if z.len() != problem.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "initial point has dim {}, problem has {}",
                    z.len(),
                    problem.dim()
                )));
            }
            Ok(z.clone())
        }
        None => problem.constraint().project(Array1::zeros(problem.dim()).view()),
    }
}

fn resolve_dist0_sq(
    problem: &SaddleProblem,
    overrides: &ScheduleOverrides,
    z0: &Array1<f64>,
) -> Result<f64> {
    if let Some(d) = overrides.dist0_sq {
        return Ok(d);
    }
    if let Some(z_star) = problem.known_saddle() {
        let diff = z0 - &z_star.to_owned();
        return Ok(diff.dot(&diff));
    }
    let diam = problem.constraint().diameter();
    if diam.is_finite() {
        return Ok(diam * diam);
    }
    Err(Error::MissingConstant(
        "dist0_sq (no known saddle and the set is unbounded)".into(),
    ))
}

/// `K0` mixes the initial aggregate gradients; the argument of the log is
/// the initial gradient spread scaled by the accuracy target.
#[allow(clippy::too_many_arguments)]
fn resolve_warmup(
    algorithm: AlgorithmKind,
    mode: ScheduleMode,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    epsilon: f64,
    z0: &Array1<f64>,
    kappa: f64,
    l_smooth: f64,
    inner_k: u32,
) -> u32 {
    if matches!(algorithm, AlgorithmKind::GtEg | AlgorithmKind::Desm | AlgorithmKind::EgCentral) {
        return 1;
    }
    let m = problem.agents();
    let mut grads = ndarray::Array2::zeros((m, problem.dim()));
    for i in 0..m {
        let gi = problem
            .local_full_gradient(i, z0.view())
            .expect("agent index in range");
        grads.row_mut(i).assign(&gi);
    }
    let spread = crate::metrics::consensus_error_mat(&grads).powi(2);
    let n = problem.components_per_agent() as f64;
    let mf = m as f64;
    let k0 = match (algorithm, mode) {
        (AlgorithmKind::McSvre, ScheduleMode::TheoryScscUnconstrained) => {
            let arg = 10.0 * kappa / (3.0 * mf * n.sqrt() * l_smooth * l_smooth * epsilon) * spread;
            mixing_rounds_for_target(topology, arg)
        }
        (AlgorithmKind::McEg, ScheduleMode::TheoryScscUnconstrained) => {
            let arg = spread / (mf * epsilon);
            let rounds = (topology.chi().sqrt() / 2.0 * arg.max(1.0).ln()).ceil();
            rounds.max(1.0) as u32
        }
        // Constrained and convex-concave warmups scale the spread by the
        // accuracy target directly.
        _ => mixing_rounds_for_target(topology, spread / epsilon),
    };
    k0.max(inner_k)
}

#[allow(clippy::too_many_arguments)]
fn resolve_total_t(
    algorithm: AlgorithmKind,
    mode: ScheduleMode,
    n: f64,
    kappa: f64,
    l_smooth: f64,
    mu: f64,
    eta: f64,
    dist0_sq: f64,
    epsilon: f64,
) -> Result<usize> {
    let t = match algorithm {
        AlgorithmKind::McSvre => match mode {
            ScheduleMode::TheoryScscUnconstrained => {
                let factor = 6.0 * (n + 4.0 * kappa * n.sqrt());
                factor * ((6.0 * dist0_sq + epsilon) / epsilon).ln()
            }
            ScheduleMode::TheoryScscConstrained => {
                let factor = 6.0 * (n + 4.0 * kappa * n.sqrt());
                factor * (10.0 * dist0_sq / epsilon).max(1.0).ln()
            }
            _ => 12.0 * n.sqrt() * l_smooth * dist0_sq / epsilon,
        },
        AlgorithmKind::McEg | AlgorithmKind::EgCentral => match mode {
            ScheduleMode::TheoryScscUnconstrained => 12.0 * kappa * (dist0_sq / epsilon + 1.0).ln(),
            ScheduleMode::TheoryScscConstrained => {
                12.0 * kappa * (2.0 * dist0_sq / epsilon).max(1.0).ln()
            }
            _ => 12.0 * l_smooth * dist0_sq / epsilon,
        },
        AlgorithmKind::GtEg => {
            if !(mu > 0.0) {
                return Err(Error::MissingConstant("mu (GT-EG theory mode)".into()));
            }
            2.0 / (mu * eta) * (dist0_sq / epsilon + 1.0).ln()
        }
        AlgorithmKind::Desm => {
            return Err(Error::MissingConstant(
                "total_t (DESM has no closed-form iteration count; set it explicitly)".into(),
            ));
        }
    };
    Ok((t.ceil() as usize).max(1))
}
