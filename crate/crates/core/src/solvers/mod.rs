//! Decentralized minimax solvers over a simulated gossip network.
//!
//! All algorithms operate on aggregate states (one row per agent) and share
//! the same bookkeeping: `sfo_per_agent` counts component-gradient
//! evaluations per agent, `comm_rounds` counts gossip rounds (`K` per
//! FastMix call, one per plain `W`-multiplication), and every draw comes
//! from a per-agent counter-mode RNG stream so runs replay bit-identically
//! for a fixed seed regardless of scheduling.

mod schedule;

pub use schedule::{make_schedule, Schedule, ScheduleMode, ScheduleOverrides};

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gossip::{fast_mix_mat, GossipTopology};
use crate::metrics::{consensus_error_mat, duality_gap_estimate, EvalPoint, RunTrace, TraceMeta, TraceRow};
use crate::problems::SaddleProblem;

/// The implemented solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmKind {
    /// Multi-consensus stochastic variance reduced extragradient.
    McSvre,
    /// Multi-consensus extragradient (deterministic).
    McEg,
    /// Gradient-tracking extragradient, one gossip multiplication per step.
    GtEg,
    /// Decentralized extra step method with single-sample oracles.
    Desm,
    /// Centralized extragradient reference (no network).
    EgCentral,
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            AlgorithmKind::McSvre => "mc-svre",
            AlgorithmKind::McEg => "mc-eg",
            AlgorithmKind::GtEg => "gt-eg",
            AlgorithmKind::Desm => "desm",
            AlgorithmKind::EgCentral => "eg-central",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc-svre" => Ok(AlgorithmKind::McSvre),
            "mc-eg" => Ok(AlgorithmKind::McEg),
            "gt-eg" => Ok(AlgorithmKind::GtEg),
            "desm" => Ok(AlgorithmKind::Desm),
            "eg-central" => Ok(AlgorithmKind::EgCentral),
            other => Err(Error::InvalidConstants(format!("unknown algorithm {other:?}"))),
        }
    }
}

/// Oracle and communication counters.
#[derive(Debug, Clone, Default)]
pub struct Ledger {
    /// Component-gradient evaluations per agent (identical across agents).
    pub sfo_per_agent: u64,
    /// Gossip rounds: `K` per FastMix call, 1 per plain multiplication.
    pub comm_rounds: u64,
    /// Number of FastMix invocations (excluding the warmup call).
    pub fastmix_calls: u64,
    /// Snapshot refreshes taken (MC-SVRE).
    pub refreshes: u64,
}

#[derive(Debug, Clone)]
enum Aux {
    McSvre {
        /// Snapshot iterates `w_t`.
        w: Array2<f64>,
        /// Estimator sequence `v_t`.
        v: Array2<f64>,
        /// Previous estimator `v_{t-1}`.
        v_prev: Array2<f64>,
        /// Tracked gradient from the previous iteration's mixing step.
        s_prev: Array2<f64>,
        /// Tracked gradient as of the end of this iteration (carried or
        /// refreshed); its row mean equals the mean of `g(w)`.
        s_current: Array2<f64>,
        /// Cached exact local gradients `g_i(w(i))`, row per agent.
        snap_grad: Array2<f64>,
    },
    McEg {
        s: Array2<f64>,
        grads: Array2<f64>,
    },
    GtEg {
        s: Array2<f64>,
        grads: Array2<f64>,
    },
    Desm,
    EgCentral,
}

/// Mutable run state owned by one run at a time.
#[derive(Debug, Clone)]
pub struct SolverState {
    kind: AlgorithmKind,
    t: usize,
    z: Array2<f64>,
    aux: Aux,
    ledger: Ledger,
    agent_rngs: Vec<ChaCha8Rng>,
    coin_rng: ChaCha8Rng,
    /// Mixed half-step iterate of the last step.
    last_half: Array2<f64>,
    last_half_mean: Array1<f64>,
    /// Row mean of the last half-step estimator (MC-SVRE diagnostics).
    last_v_half_mean: Array1<f64>,
}

fn row_mean(mat: &Array2<f64>) -> Array1<f64> {
    mat.mean_axis(Axis(0)).expect("nonempty matrix")
}

fn agent_streams(seed: u64, m: usize) -> Vec<ChaCha8Rng> {
    (0..m)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            rng
        })
        .collect()
}

fn coin_stream(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    rng
}

impl SolverState {
    pub fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    /// Completed outer iterations.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Aggregate iterate `Z`, one row per agent.
    pub fn iterate(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn mean_iterate(&self) -> Array1<f64> {
        row_mean(&self.z)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    /// Mixed half-step iterate `z_{t+1/2}` of the last completed step.
    pub fn last_half(&self) -> &Array2<f64> {
        &self.last_half
    }

    pub fn last_half_mean(&self) -> &Array1<f64> {
        &self.last_half_mean
    }

    /// Row mean of the half-step estimator `v_{t+1/2}` (MC-SVRE only).
    pub fn last_v_half_mean(&self) -> &Array1<f64> {
        &self.last_v_half_mean
    }

    /// Tracked gradient matrix `S` (algorithms that maintain one).
    pub fn tracked(&self) -> Option<&Array2<f64>> {
        match &self.aux {
            Aux::McSvre { s_current, .. } => Some(s_current),
            Aux::McEg { s, .. } | Aux::GtEg { s, .. } => Some(s),
            _ => None,
        }
    }

    /// Snapshot matrix `W` (MC-SVRE only).
    pub fn snapshot(&self) -> Option<&Array2<f64>> {
        match &self.aux {
            Aux::McSvre { w, .. } => Some(w),
            _ => None,
        }
    }

    /// Replaces the per-agent sampling streams; used for frozen-state
    /// resampling experiments.
    pub fn reseed_agents(&mut self, seed: u64) {
        let m = self.agent_rngs.len();
        self.agent_rngs = agent_streams(seed, m);
    }
}

/// Builds the initial state for `algorithm`, replicating `z0` (projected
/// onto the feasible set) at every agent and mixing the initial gradients
/// for `warmup_k0` rounds where the algorithm calls for it.
pub fn init_state(
    algorithm: AlgorithmKind,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
    z0: ArrayView1<'_, f64>,
) -> Result<SolverState> {
    if z0.len() != problem.dim() {
        return Err(Error::DimensionMismatch(format!(
            "start point has dim {}, problem has {}",
            z0.len(),
            problem.dim()
        )));
    }
    if algorithm != AlgorithmKind::EgCentral && topology.size() != problem.agents() {
        return Err(Error::DimensionMismatch(format!(
            "topology has {} agents, problem has {}",
            topology.size(),
            problem.agents()
        )));
    }
    if algorithm == AlgorithmKind::GtEg && !problem.constraint().is_unconstrained() {
        return Err(Error::ConstrainedNotSupported);
    }

    let z0 = problem.constraint().project(z0)?;
    let m = problem.agents();
    let rows = if algorithm == AlgorithmKind::EgCentral { 1 } else { m };
    let mut z = Array2::zeros((rows, problem.dim()));
    for mut r in z.rows_mut() {
        r.assign(&z0);
    }

    let mut ledger = Ledger::default();
    let aux = match algorithm {
        AlgorithmKind::McSvre => {
            let raw = problem.aggregate_gradient(&z);
            ledger.sfo_per_agent += problem.components_per_agent() as u64;
            let v = fast_mix_mat(&raw, topology, schedule.warmup_k0);
            ledger.comm_rounds += schedule.warmup_k0 as u64;
            Aux::McSvre {
                w: z.clone(),
                v_prev: Array2::zeros(raw.raw_dim()),
                s_prev: Array2::zeros(raw.raw_dim()),
                s_current: v.clone(),
                snap_grad: raw,
                v,
            }
        }
        AlgorithmKind::McEg => {
            let grads = problem.aggregate_gradient(&z);
            ledger.sfo_per_agent += problem.components_per_agent() as u64;
            let s = fast_mix_mat(&grads, topology, schedule.warmup_k0);
            ledger.comm_rounds += schedule.warmup_k0 as u64;
            Aux::McEg { s, grads }
        }
        AlgorithmKind::GtEg => {
            let grads = problem.aggregate_gradient(&z);
            ledger.sfo_per_agent += problem.components_per_agent() as u64;
            Aux::GtEg {
                s: grads.clone(),
                grads,
            }
        }
        AlgorithmKind::Desm => Aux::Desm,
        AlgorithmKind::EgCentral => Aux::EgCentral,
    };

    let d = problem.dim();
    Ok(SolverState {
        kind: algorithm,
        t: 0,
        last_half: z.clone(),
        last_half_mean: row_mean(&z),
        last_v_half_mean: Array1::zeros(d),
        z,
        aux,
        ledger,
        agent_rngs: agent_streams(schedule.seed, m),
        coin_rng: coin_stream(schedule.seed),
    })
}

/// One FastMix invocation: `K` rounds on the ledger.
fn mix(
    ledger: &mut Ledger,
    topology: &GossipTopology,
    mat: &Array2<f64>,
    k: u32,
) -> Array2<f64> {
    ledger.fastmix_calls += 1;
    ledger.comm_rounds += k as u64;
    fast_mix_mat(mat, topology, k)
}

/// One plain gossip multiplication: a single round.
fn gossip_once(ledger: &mut Ledger, topology: &GossipTopology, mat: &Array2<f64>) -> Array2<f64> {
    ledger.comm_rounds += 1;
    topology.matrix().dot(mat)
}

fn project_rows(problem: &SaddleProblem, mut mat: Array2<f64>) -> Array2<f64> {
    if !problem.constraint().is_unconstrained() {
        for row in mat.rows_mut() {
            problem.constraint().project_in_place(row);
        }
    }
    mat
}

fn ensure_finite(mat: &Array2<f64>, t: usize) -> Result<()> {
    if mat.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteIterate(t))
    }
}

/// Advances `state` by one outer iteration of its algorithm.
pub fn step(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    match state.kind {
        AlgorithmKind::McSvre => step_mc_svre(state, problem, topology, schedule),
        AlgorithmKind::McEg => step_mc_eg(state, problem, topology, schedule),
        AlgorithmKind::GtEg => step_gt_eg(state, problem, topology, schedule),
        AlgorithmKind::Desm => step_desm(state, problem, topology, schedule),
        AlgorithmKind::EgCentral => step_eg_central(state, problem, schedule),
    }
}

/// MC-SVRE step wrapper; errors if the state belongs to another algorithm.
pub fn mc_svre_step(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    if state.kind != AlgorithmKind::McSvre {
        return Err(Error::NotInitialized);
    }
    step(state, problem, topology, schedule)
}

pub fn mc_eg_step(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    if state.kind != AlgorithmKind::McEg {
        return Err(Error::NotInitialized);
    }
    step(state, problem, topology, schedule)
}

pub fn gt_eg_step(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    if state.kind != AlgorithmKind::GtEg {
        return Err(Error::NotInitialized);
    }
    step(state, problem, topology, schedule)
}

pub fn desm_step(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    if state.kind != AlgorithmKind::Desm {
        return Err(Error::NotInitialized);
    }
    step(state, problem, topology, schedule)
}

fn step_mc_svre(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    let (eta, k, l) = (schedule.eta, schedule.inner_k, schedule.batch_l);
    let m = problem.agents();
    let n = problem.components_per_agent();
    let d = problem.dim();

    let Aux::McSvre {
        w,
        v,
        v_prev,
        s_prev,
        s_current,
        snap_grad,
    } = &mut state.aux
    else {
        return Err(Error::NotInitialized);
    };

    // z'_t = alpha z_t + (1 - alpha) w_t
    let mut zp = &state.z * schedule.alpha;
    zp.scaled_add(1.0 - schedule.alpha, w);

    // s_t = FastMix(s_{t-1} + v_t - v_{t-1}, K)
    let mut arg = &*s_prev + &*v;
    arg -= &*v_prev;
    let s_t = mix(&mut state.ledger, topology, &arg, k);

    // z_{t+1/2} = FastMix(P(z'_t - eta s_t), K)
    let mut half_arg = zp.clone();
    half_arg.scaled_add(-eta, &s_t);
    let z_half = mix(&mut state.ledger, topology, &project_rows(problem, half_arg), k);

    // Per-agent variance-reduced estimator; the snapshot full gradient is
    // cached, only the fresh component draws count as SFO.
    let mut v_half = Array2::zeros((m, d));
    for i in 0..m {
        let rng = &mut state.agent_rngs[i];
        let mut corr = Array1::zeros(d);
        for _ in 0..l {
            let j = rng.random_range(0..n);
            corr += &problem.grad_component(i, j, z_half.row(i));
            corr -= &problem.grad_component(i, j, w.row(i));
        }
        corr /= l as f64;
        corr += &snap_grad.row(i);
        v_half.row_mut(i).assign(&corr);
    }
    state.ledger.sfo_per_agent += l as u64;

    // s_{t+1/2} = FastMix(s_t + v_{t+1/2} - v_t, K)
    let mut arg = &s_t + &v_half;
    arg -= &*v;
    let s_half = mix(&mut state.ledger, topology, &arg, k);

    // z_{t+1} = FastMix(P(z'_t - eta s_{t+1/2}), K)
    let mut full_arg = zp;
    full_arg.scaled_add(-eta, &s_half);
    let z_next = mix(&mut state.ledger, topology, &project_rows(problem, full_arg), k);
    ensure_finite(&z_next, state.t)?;

    // Snapshot refresh with one global coin per iteration.
    if state.coin_rng.random::<f64>() < schedule.p {
        state.ledger.refreshes += 1;
        let raw = problem.aggregate_gradient(&z_next);
        state.ledger.sfo_per_agent += n as u64;
        *w = z_next.clone();
        *v_prev = std::mem::replace(v, raw.clone());
        *snap_grad = raw;
        let mut arg = &s_t + &*v;
        arg -= &*v_prev;
        *s_current = mix(&mut state.ledger, topology, &arg, k);
    } else {
        *v_prev = v.clone();
        *s_current = s_t.clone();
    }
    *s_prev = s_t;

    state.last_v_half_mean = row_mean(&v_half);
    state.last_half_mean = row_mean(&z_half);
    state.last_half = z_half;
    state.z = z_next;
    state.t += 1;
    Ok(())
}

fn step_mc_eg(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    let (eta, k) = (schedule.eta, schedule.inner_k);
    let n = problem.components_per_agent() as u64;

    let Aux::McEg { s, grads } = &mut state.aux else {
        return Err(Error::NotInitialized);
    };

    // z_{t+1/2} = FastMix(P(z_t - eta s_t), K)
    let mut half_arg = state.z.clone();
    half_arg.scaled_add(-eta, s);
    let z_half = mix(&mut state.ledger, topology, &project_rows(problem, half_arg), k);

    let g_half = problem.aggregate_gradient(&z_half);
    state.ledger.sfo_per_agent += n;

    // s_{t+1/2} = FastMix(s_t + g(z_{t+1/2}) - g(z_t), K)
    let mut arg = &*s + &g_half;
    arg -= &*grads;
    let s_half = mix(&mut state.ledger, topology, &arg, k);

    // z_{t+1} = FastMix(P(z_t - eta s_{t+1/2}), K)
    let mut full_arg = state.z.clone();
    full_arg.scaled_add(-eta, &s_half);
    let z_next = mix(&mut state.ledger, topology, &project_rows(problem, full_arg), k);
    ensure_finite(&z_next, state.t)?;

    let g_next = problem.aggregate_gradient(&z_next);
    state.ledger.sfo_per_agent += n;

    // s_{t+1} = FastMix(s_t + g(z_{t+1}) - g(z_t), K)
    let mut arg = &*s + &g_next;
    arg -= &*grads;
    *s = mix(&mut state.ledger, topology, &arg, k);
    *grads = g_next;

    state.last_half_mean = row_mean(&z_half);
    state.last_half = z_half;
    state.z = z_next;
    state.t += 1;
    Ok(())
}

fn step_gt_eg(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    let eta = schedule.eta;
    let n = problem.components_per_agent() as u64;

    let Aux::GtEg { s, grads } = &mut state.aux else {
        return Err(Error::NotInitialized);
    };

    // z_{t+1/2} = z_t - eta s_t; the printed rule applies no gossip here,
    // the corrected variant mixes the half step too.
    let mut z_half = if schedule.gt_corrected {
        gossip_once(&mut state.ledger, topology, &state.z)
    } else {
        state.z.clone()
    };
    z_half.scaled_add(-eta, s);

    let g_half = problem.aggregate_gradient(&z_half);
    state.ledger.sfo_per_agent += n;

    // s_{t+1/2} = s_t + g(z_{t+1/2}) - g(z_t)
    let mut s_half = &*s + &g_half;
    s_half -= &*grads;

    // z_{t+1} = W z_t - eta s_{t+1/2}
    let mut z_next = gossip_once(&mut state.ledger, topology, &state.z);
    z_next.scaled_add(-eta, &s_half);
    ensure_finite(&z_next, state.t)?;

    let g_next = problem.aggregate_gradient(&z_next);
    state.ledger.sfo_per_agent += n;

    // s_{t+1} = W s_t + g(z_{t+1}) - g(z_t)
    let mut s_next = gossip_once(&mut state.ledger, topology, s);
    s_next += &g_next;
    s_next -= &*grads;
    *s = s_next;
    *grads = g_next;

    state.last_half_mean = row_mean(&z_half);
    state.last_half = z_half;
    state.z = z_next;
    state.t += 1;
    Ok(())
}

fn step_desm(
    state: &mut SolverState,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
) -> Result<()> {
    let eta = schedule.eta;
    let m = problem.agents();
    let n = problem.components_per_agent();
    let d = problem.dim();

    if !matches!(state.aux, Aux::Desm) {
        return Err(Error::NotInitialized);
    }

    // Single-sample stochastic operator, fresh draw per half step.
    let sample = |rngs: &mut [ChaCha8Rng], at: &Array2<f64>| {
        let mut g = Array2::zeros((m, d));
        for i in 0..m {
            let j = rngs[i].random_range(0..n);
            g.row_mut(i).assign(&problem.grad_component(i, j, at.row(i)));
        }
        g
    };

    // z_{t+1/2} = P(W z_t - eta ghat(z_t)); each half step gossips the
    // current iterate once.
    let mut half = gossip_once(&mut state.ledger, topology, &state.z);
    let ghat = sample(&mut state.agent_rngs, &state.z);
    state.ledger.sfo_per_agent += 1;
    half.scaled_add(-eta, &ghat);
    let z_half = project_rows(problem, half);

    // z_{t+1} = P(W z_t - eta ghat(z_{t+1/2}))
    let mut full = gossip_once(&mut state.ledger, topology, &state.z);
    let ghat_half = sample(&mut state.agent_rngs, &z_half);
    state.ledger.sfo_per_agent += 1;
    full.scaled_add(-eta, &ghat_half);
    let z_next = project_rows(problem, full);
    ensure_finite(&z_next, state.t)?;

    state.last_half_mean = row_mean(&z_half);
    state.last_half = z_half;
    state.z = z_next;
    state.t += 1;
    Ok(())
}

fn step_eg_central(
    state: &mut SolverState,
    problem: &SaddleProblem,
    schedule: &Schedule,
) -> Result<()> {
    let eta = schedule.eta;
    if !matches!(state.aux, Aux::EgCentral) {
        return Err(Error::NotInitialized);
    }

    let z = state.z.row(0).to_owned();
    let g = problem.mean_operator(z.view());
    let mut half = z.clone();
    half.scaled_add(-eta, &g);
    let z_half = problem.constraint().project(half.view())?;

    let g_half = problem.mean_operator(z_half.view());
    let mut next = z;
    next.scaled_add(-eta, &g_half);
    let z_next = problem.constraint().project(next.view())?;
    // Two full passes over the local components on every agent.
    state.ledger.sfo_per_agent += 2 * problem.components_per_agent() as u64;

    if !z_next.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteIterate(state.t));
    }

    state.last_half_mean = z_half.clone();
    state
        .last_half
        .row_mut(0)
        .assign(&z_half);
    state.z.row_mut(0).assign(&z_next);
    state.t += 1;
    Ok(())
}

/// Options for [`run`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Record metrics every `metric_cadence` iterations (plus the final
    /// one). Oracle calls spent here are ledgered separately.
    pub metric_cadence: usize,
    pub evaluate_at: EvalPoint,
    /// Gradient-mapping parameter.
    pub tau: f64,
    /// Maintain the running average of the half-step means and its gap.
    pub track_ergodic: bool,
    /// Reference saddle for distance/gap metrics; falls back to the
    /// problem's known saddle.
    pub reference: Option<Array1<f64>>,
    /// Stop early once the recorded grad norm falls at or below this.
    pub stop_grad_norm: Option<f64>,
    /// Stop early once the squared recorded distance falls at or below this.
    pub stop_dist_sq: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            metric_cadence: 1,
            evaluate_at: EvalPoint::Mean,
            tau: 0.5,
            track_ergodic: false,
            reference: None,
            stop_grad_norm: None,
            stop_dist_sq: None,
        }
    }
}

/// A completed run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    /// Mean iterate at the last completed iteration.
    pub final_mean: Array1<f64>,
    /// `(1/T) sum_t zbar_{t+1/2}` when ergodic tracking was on.
    pub ergodic_average: Option<Array1<f64>>,
}

/// Executes up to `schedule.total_t` steps of `algorithm`, recording metric
/// rows at the configured cadence and invoking `hook` on each recorded row.
pub fn run(
    algorithm: AlgorithmKind,
    problem: &SaddleProblem,
    topology: &GossipTopology,
    schedule: &Schedule,
    z0: ArrayView1<'_, f64>,
    options: &RunOptions,
    mut hook: Option<&mut dyn FnMut(&TraceRow)>,
) -> Result<RunOutcome> {
    if options.metric_cadence == 0 {
        return Err(Error::InvalidConstants("metric cadence must be at least 1".into()));
    }
    let mut state = init_state(algorithm, problem, topology, schedule, z0)?;
    let reference: Option<Array1<f64>> = options
        .reference
        .clone()
        .or_else(|| problem.known_saddle().map(|v| v.to_owned()));

    let d = problem.dim();
    let mut ergodic_sum = Array1::<f64>::zeros(d);
    let mut ergodic_count = 0usize;
    let mut metric_calls = 0u64;
    let mut rows: Vec<TraceRow> = Vec::new();

    let record = |state: &SolverState,
                      ergodic: Option<&Array1<f64>>,
                      metric_calls: &mut u64|
     -> TraceRow {
        let z_eval = match options.evaluate_at {
            EvalPoint::Mean => state.mean_iterate(),
            EvalPoint::Agent(i) => state.z.row(i.min(state.z.nrows() - 1)).to_owned(),
        };
        let g = problem.mean_operator(z_eval.view());
        *metric_calls += (problem.agents() * problem.components_per_agent()) as u64;
        let grad_norm = g.dot(&g).sqrt();
        let grad_mapping = if problem.constraint().is_unconstrained() {
            grad_norm
        } else {
            let mut shifted = z_eval.clone();
            shifted.scaled_add(-options.tau, &g);
            let projected = problem
                .constraint()
                .project(shifted.view())
                .expect("dimension fixed");
            let diff = &z_eval - &projected;
            diff.dot(&diff).sqrt() / options.tau
        };
        let dist = reference.as_ref().map(|r| {
            let diff = &z_eval - r;
            diff.dot(&diff).sqrt()
        });
        let gap = match (options.track_ergodic, reference.as_ref(), ergodic) {
            (true, Some(r), Some(avg)) => {
                *metric_calls += 2 * (problem.agents() * problem.components_per_agent()) as u64;
                duality_gap_estimate(
                    problem,
                    avg.slice(ndarray::s![..problem.dx()]),
                    avg.slice(ndarray::s![problem.dx()..]),
                    Some(r.view()),
                )
                .ok()
            }
            _ => None,
        };
        TraceRow {
            t: state.t,
            epoch: state.ledger.sfo_per_agent as f64 / problem.components_per_agent() as f64,
            comm_rounds: state.ledger.comm_rounds,
            grad_norm,
            grad_mapping_norm: grad_mapping,
            consensus_err: consensus_error_mat(&state.z),
            dist_to_saddle: dist,
            ergodic_gap: gap,
        }
    };

    // Initialization row.
    let first = record(&state, None, &mut metric_calls);
    if let Some(h) = hook.as_deref_mut() {
        h(&first);
    }
    rows.push(first);

    for outer in 0..schedule.total_t {
        step(&mut state, problem, topology, schedule)?;
        if options.track_ergodic {
            ergodic_sum += &state.last_half_mean;
            ergodic_count += 1;
        }
        let at_end = outer + 1 == schedule.total_t;
        if state.t % options.metric_cadence == 0 || at_end {
            let ergodic = if ergodic_count > 0 {
                Some(&ergodic_sum / ergodic_count as f64)
            } else {
                None
            };
            let row = record(&state, ergodic.as_ref(), &mut metric_calls);
            if let Some(h) = hook.as_deref_mut() {
                h(&row);
            }
            let stop_grad = options
                .stop_grad_norm
                .map_or(false, |thr| row.grad_norm <= thr);
            let stop_dist = match (options.stop_dist_sq, row.dist_to_saddle) {
                (Some(thr), Some(dist)) => dist * dist <= thr,
                _ => false,
            };
            rows.push(row);
            if stop_grad || stop_dist {
                break;
            }
        }
    }

    let meta = TraceMeta {
        algorithm: algorithm.to_string(),
        problem: problem.kind_name().to_string(),
        topology: topology.describe(),
        schedule: schedule.describe(),
        seed: schedule.seed,
        metric_oracle_calls: metric_calls,
    };
    let ergodic_average = if options.track_ergodic && ergodic_count > 0 {
        Some(&ergodic_sum / ergodic_count as f64)
    } else {
        None
    };
    Ok(RunOutcome {
        trace: RunTrace { rows, meta },
        final_mean: state.mean_iterate(),
        ergodic_average,
    })
}
