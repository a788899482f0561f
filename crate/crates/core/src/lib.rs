//! Decentralized convex-concave minimax optimization over simulated gossip
//! networks.
//!
//! The crate bundles:
//!
//! - [`gossip`]: mixing-matrix construction and accelerated consensus
//!   averaging (FastMix) with communication-round bookkeeping;
//! - [`geometry`]: product constraint sets with exact Euclidean projections;
//! - [`problems`]: finite-sum saddle oracles (quadratic testbed, AUC
//!   maximization, distributionally robust logistic regression);
//! - [`solvers`]: MC-SVRE, MC-EG, GT-EG, DESM and a centralized
//!   extragradient reference, plus theory-mode step-size/round schedules;
//! - [`metrics`]: convergence and consensus diagnostics gathered into run
//!   traces.

pub mod error;
pub mod geometry;
pub mod gossip;
pub mod metrics;
pub mod problems;
pub mod solvers;

pub use error::{Error, Result};
pub use geometry::{Block, ConstraintSet};
pub use gossip::{build_topology, fast_mix, mixing_rounds_for_target, AggregateState, GossipTopology, TopologyKind};
pub use metrics::{
    consensus_error, duality_gap_estimate, grad_mapping_norm, grad_operator_norm, EvalPoint,
    RunTrace, TraceMeta, TraceRow,
};
pub use problems::{
    load_libsvm, make_auc, make_dro, make_quadratic, partition, quadratic_from_parts, Dataset,
    SaddleProblem,
};
pub use solvers::{
    init_state, make_schedule, run, step, AlgorithmKind, RunOptions, RunOutcome, Schedule,
    ScheduleMode, ScheduleOverrides, SolverState,
};
