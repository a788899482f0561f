//! Solver behavior: reduction identities, hand-checked steps, ledger
//! exactness and convergence trends.

use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use saddlenet_core::solvers::{desm_step, gt_eg_step, mc_eg_step};
use saddlenet_core::{
    build_topology, consensus_error, init_state, make_quadratic, make_schedule,
    quadratic_from_parts, run, step, AggregateState, AlgorithmKind, RunOptions, Schedule,
    ScheduleMode, ScheduleOverrides, TopologyKind,
};

fn manual_schedule(eta: f64, total_t: usize, inner_k: u32, seed: u64) -> Schedule {
    Schedule {
        eta,
        p: 0.05,
        alpha: 0.95,
        inner_k,
        warmup_k0: inner_k,
        total_t,
        batch_l: 1,
        seed,
        mode: ScheduleMode::Manual,
        gt_corrected: false,
    }
}

fn bilinear() -> saddlenet_core::SaddleProblem {
    quadratic_from_parts(
        1,
        1,
        vec![array![[1.0]]],
        vec![array![0.0]],
        vec![array![0.0]],
        0.0,
        None,
    )
    .unwrap()
    .with_known_saddle(array![0.0, 0.0])
}

#[test]
fn mc_eg_bilinear_hand_values() {
    // f(x, y) = x y from z0 = (1, 0) with eta = 0.2:
    // z_{1/2} = (1, 0.2), z_1 = (0.96, 0.2).
    let problem = bilinear();
    let topo = build_topology(TopologyKind::Complete, 1).unwrap();
    let schedule = manual_schedule(0.2, 2, 1, 0);
    let mut state = init_state(AlgorithmKind::McEg, &problem, &topo, &schedule, array![1.0, 0.0].view()).unwrap();

    mc_eg_step(&mut state, &problem, &topo, &schedule).unwrap();
    assert!((state.last_half()[[0, 0]] - 1.0).abs() <= 1e-15);
    assert!((state.last_half()[[0, 1]] - 0.2).abs() <= 1e-15);
    assert!((state.iterate()[[0, 0]] - 0.96).abs() <= 1e-15);
    assert!((state.iterate()[[0, 1]] - 0.2).abs() <= 1e-15);
}

#[test]
fn mc_eg_stays_at_saddle() {
    // Consensus start at z* on a complete graph: averaging is exact, the
    // tracked gradient is the zero mean operator, and nothing moves.
    let problem = make_quadratic(4, 3, 2, 2, 1.0, 8.0, 11).unwrap();
    let topo = build_topology(TopologyKind::Complete, 4).unwrap();
    let schedule = manual_schedule(0.01, 25, 3, 0);
    let z_star = problem.known_saddle().unwrap().to_owned();
    let mut state =
        init_state(AlgorithmKind::McEg, &problem, &topo, &schedule, z_star.view()).unwrap();
    for _ in 0..25 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        let mean = state.mean_iterate();
        let dist = (&mean - &z_star).dot(&(&mean - &z_star)).sqrt();
        assert!(dist <= 1e-10, "drifted {dist} from the saddle");
    }
}

#[test]
fn mc_eg_single_agent_matches_standalone_extragradient() {
    let problem = make_quadratic(1, 6, 3, 3, 0.5, 6.0, 3).unwrap();
    let topo = build_topology(TopologyKind::Complete, 1).unwrap();
    let schedule = manual_schedule(0.02, 100, 4, 0);
    let z0 = Array1::from_shape_fn(6, |k| 0.3 * k as f64 - 0.7);
    let mut state =
        init_state(AlgorithmKind::McEg, &problem, &topo, &schedule, z0.view()).unwrap();

    // Straight-line oracle: z_{t+1/2} = z - eta g(z), z_{t+1} = z - eta g(z_{1/2}).
    let mut z = z0.clone();
    for t in 0..100 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        let g = problem.local_full_gradient(0, z.view()).unwrap();
        let half = &z - &(&g * schedule.eta);
        let g_half = problem.local_full_gradient(0, half.view()).unwrap();
        z = &z - &(&g_half * schedule.eta);
        let diff = (&state.iterate().row(0).to_owned() - &z)
            .mapv(f64::abs)
            .into_iter()
            .fold(0.0f64, f64::max);
        assert!(diff <= 1e-12, "t={t} diverged by {diff}");
    }
}

/// Standalone loopless variance-reduced extragradient on one machine,
/// consuming the same RNG streams as the solver.
struct LooplessSvre {
    z: Array1<f64>,
    w: Array1<f64>,
    snap: Array1<f64>,
    agent_rng: ChaCha8Rng,
    coin_rng: ChaCha8Rng,
}

impl LooplessSvre {
    fn new(z0: Array1<f64>, problem: &saddlenet_core::SaddleProblem, seed: u64) -> Self {
        let snap = problem.local_full_gradient(0, z0.view()).unwrap();
        let mut agent_rng = ChaCha8Rng::seed_from_u64(seed);
        agent_rng.set_stream(1);
        let mut coin_rng = ChaCha8Rng::seed_from_u64(seed);
        coin_rng.set_stream(0);
        Self {
            w: z0.clone(),
            z: z0,
            snap,
            agent_rng,
            coin_rng,
        }
    }

    fn step(&mut self, problem: &saddlenet_core::SaddleProblem, schedule: &Schedule) {
        let n = problem.components_per_agent();
        // With m = 1 the tracked gradient telescopes to v_t = snapshot
        // gradient, so the half step extrapolates from the snapshot.
        let zp = &(&self.z * schedule.alpha) + &(&self.w * (1.0 - schedule.alpha));
        let z_half = &zp - &(&self.snap * schedule.eta);
        let j = self.agent_rng.random_range(0..n);
        let v_half = &self.snap
            + &(&problem.grad_component(0, j, z_half.view())
                - &problem.grad_component(0, j, self.w.view()));
        let z_next = &zp - &(&v_half * schedule.eta);
        if self.coin_rng.random::<f64>() < schedule.p {
            self.w = z_next.clone();
            self.snap = problem.local_full_gradient(0, z_next.view()).unwrap();
        }
        self.z = z_next;
    }
}

#[test]
fn mc_svre_single_agent_matches_standalone_loopless_svre() {
    let problem = make_quadratic(1, 8, 3, 3, 0.5, 5.0, 6).unwrap();
    let topo = build_topology(TopologyKind::Complete, 1).unwrap();
    let mut schedule = manual_schedule(0.01, 120, 2, 42);
    schedule.p = 1.0 / 16.0;
    schedule.alpha = 1.0 - schedule.p;

    let z0 = Array1::from_shape_fn(6, |k| 0.2 * (k as f64) - 0.5);
    let mut state =
        init_state(AlgorithmKind::McSvre, &problem, &topo, &schedule, z0.view()).unwrap();
    let mut oracle = LooplessSvre::new(z0, &problem, schedule.seed);

    for t in 0..120 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        oracle.step(&problem, &schedule);
        let diff = (&state.iterate().row(0).to_owned() - &oracle.z)
            .mapv(f64::abs)
            .into_iter()
            .fold(0.0f64, f64::max);
        assert!(diff <= 1e-12, "t={t} diverged by {diff}");
    }
}

#[test]
fn mc_svre_single_component_estimator_is_exact() {
    // n = 1: the correction terms cancel and v_{t+1/2} = g_{i,1}(z_{t+1/2}).
    let problem = make_quadratic(3, 1, 2, 2, 1.0, 3.0, 7).unwrap();
    let topo = build_topology(TopologyKind::Ring, 3).unwrap();
    let mut schedule = manual_schedule(0.05, 5, 2, 1);
    schedule.p = 0.5;
    schedule.alpha = 0.5;
    let mut state = init_state(
        AlgorithmKind::McSvre,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(4).view(),
    )
    .unwrap();
    for _ in 0..5 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        let mut expect = Array1::<f64>::zeros(4);
        for i in 0..3 {
            expect += &problem.grad_component(i, 0, state.last_half().row(i));
        }
        expect /= 3.0;
        let got = state.last_v_half_mean();
        for (a, b) in got.iter().zip(expect.iter()) {
            assert!((a - b).abs() <= 1e-13);
        }
    }
}

#[test]
fn mc_svre_tracked_gradient_identity() {
    // mean(S_t) equals the mean of the exact snapshot gradients at every
    // iteration; FastMix preserves row means so the identity survives
    // mixing.
    let problem = make_quadratic(5, 6, 3, 2, 0.8, 6.0, 9).unwrap();
    let topo = build_topology(TopologyKind::RandomGnp { prob: 0.6, seed: 2 }, 5).unwrap();
    let mut schedule = manual_schedule(0.02, 60, 3, 5);
    schedule.p = 1.0 / 12.0;
    schedule.alpha = 1.0 - schedule.p;
    let mut state = init_state(
        AlgorithmKind::McSvre,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(5).view(),
    )
    .unwrap();
    for _ in 0..60 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        let s_mean = state
            .tracked()
            .unwrap()
            .mean_axis(ndarray::Axis(0))
            .unwrap();
        let w = state.snapshot().unwrap();
        let mut g_mean = Array1::<f64>::zeros(problem.dim());
        for i in 0..5 {
            g_mean += &problem.local_full_gradient(i, w.row(i)).unwrap();
        }
        g_mean /= 5.0;
        for (a, b) in s_mean.iter().zip(g_mean.iter()) {
            assert!((a - b).abs() <= 1e-9, "identity broke: {a} vs {b}");
        }
    }
}

#[test]
fn mc_svre_refresh_on_complete_graph_recovers_exact_average() {
    // Force the refresh branch (p = 1): v rows become the exact local
    // gradients and the tracked mean matches the network average exactly
    // (complete graph, K >= 1 averages in one round).
    let problem = make_quadratic(4, 5, 2, 2, 1.0, 4.0, 13).unwrap();
    let topo = build_topology(TopologyKind::Complete, 4).unwrap();
    let mut schedule = manual_schedule(0.03, 3, 1, 8);
    schedule.p = 1.0;
    schedule.alpha = 0.0;
    let mut state = init_state(
        AlgorithmKind::McSvre,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(4).view(),
    )
    .unwrap();
    for _ in 0..3 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        assert_eq!(state.snapshot().unwrap(), state.iterate());
        let z = state.iterate().clone();
        let s = state.tracked().unwrap();
        let mut g_mean = Array1::<f64>::zeros(problem.dim());
        for i in 0..4 {
            g_mean += &problem.local_full_gradient(i, z.row(i)).unwrap();
        }
        g_mean /= 4.0;
        // every row of the mixed tracked gradient equals the average
        for i in 0..4 {
            for (a, b) in s.row(i).iter().zip(g_mean.iter()) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn gt_eg_consensus_start_is_parallel_extragradient_for_one_step() {
    let problem = make_quadratic(4, 2, 2, 2, 1.0, 5.0, 17).unwrap();
    let topo = build_topology(TopologyKind::Complete, 4).unwrap();
    let schedule = manual_schedule(0.01, 1, 1, 0);
    let z0 = array![0.4, -0.3, 0.2, 0.9];
    let mut state =
        init_state(AlgorithmKind::GtEg, &problem, &topo, &schedule, z0.view()).unwrap();
    gt_eg_step(&mut state, &problem, &topo, &schedule).unwrap();

    for i in 0..4 {
        let gi = problem.local_full_gradient(i, z0.view()).unwrap();
        let half = &z0 - &(&gi * schedule.eta);
        let gi_half = problem.local_full_gradient(i, half.view()).unwrap();
        let next = &z0 - &(&gi_half * schedule.eta);
        for (a, b) in state.iterate().row(i).iter().zip(next.iter()) {
            assert!((a - b).abs() <= 1e-13);
        }
    }
}

#[test]
fn gt_eg_converges_on_ring() {
    // Small-step regime: distance to the saddle trends down over 500 steps.
    let problem = make_quadratic(10, 4, 3, 3, 1.0, 5.0, 23).unwrap();
    let topo = build_topology(TopologyKind::Ring, 10).unwrap();
    let kappa = problem.condition_number();
    let chi = topo.chi();
    let l = problem.smoothness();
    let eta = (1.0 / (kappa * chi * chi * l))
        .max(1.0 / (kappa.cbrt() * chi.powf(4.0 / 3.0) * l))
        .min(1.0 / (chi * chi * l));
    let schedule = manual_schedule(eta, 500, 1, 0);
    let z_star = problem.known_saddle().unwrap().to_owned();
    let z0 = &z_star + &Array1::from_elem(6, 1.0);
    let mut state =
        init_state(AlgorithmKind::GtEg, &problem, &topo, &schedule, z0.view()).unwrap();

    let mut log_dist = Vec::new();
    let d0 = {
        let m = state.mean_iterate();
        (&m - &z_star).dot(&(&m - &z_star)).sqrt()
    };
    for t in 0..500 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        if t % 10 == 0 {
            let m = state.mean_iterate();
            let dist = (&m - &z_star).dot(&(&m - &z_star)).sqrt();
            log_dist.push((t as f64, dist.max(1e-300).ln()));
        }
    }
    let final_dist = {
        let m = state.mean_iterate();
        (&m - &z_star).dot(&(&m - &z_star)).sqrt()
    };
    assert!(final_dist < d0, "no progress: {final_dist} vs {d0}");
    assert!(best_fit_slope(&log_dist) < 0.0, "log distance must trend down");
}

#[test]
fn gt_eg_rejects_constrained_problems() {
    let ds = saddlenet_core::Dataset::from_parts(
        Array2::from_elem((4, 2), 0.5),
        vec![1.0, -1.0, 1.0, -1.0],
    )
    .unwrap();
    let problem = saddlenet_core::make_dro(&ds, 2, 2, 1.0, 0.1, 0.25).unwrap();
    let topo = build_topology(TopologyKind::Complete, 2).unwrap();
    let schedule = manual_schedule(0.01, 1, 1, 0);
    let err = init_state(
        AlgorithmKind::GtEg,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(problem.dim()).view(),
    )
    .unwrap_err();
    assert!(matches!(err, saddlenet_core::Error::ConstrainedNotSupported));
}

#[test]
fn desm_stochastic_direction_is_unbiased_by_enumeration() {
    // Averaging the single-sample operator over all components recovers
    // the local full gradient exactly.
    let problem = make_quadratic(3, 7, 2, 2, 1.0, 4.0, 29).unwrap();
    let z = array![0.3, -0.2, 0.8, 0.1];
    for i in 0..3 {
        let mut avg = Array1::<f64>::zeros(4);
        for j in 0..7 {
            avg += &problem.grad_component(i, j, z.view());
        }
        avg /= 7.0;
        let full = problem.local_full_gradient(i, z.view()).unwrap();
        for (a, b) in avg.iter().zip(full.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn desm_zero_variance_saddle_is_fixed() {
    // Identical components across (i, j) make the stochastic oracle
    // deterministic; starting at the saddle nothing moves.
    let a = array![[1.5, 0.0], [0.0, 0.5]];
    let problem = quadratic_from_parts(
        3,
        4,
        vec![a; 12],
        vec![array![0.3, -0.1]; 12],
        vec![array![0.2, 0.4]; 12],
        1.0,
        None,
    )
    .unwrap();
    let topo = build_topology(TopologyKind::Ring, 3).unwrap();
    let schedule = manual_schedule(0.05, 20, 1, 0);
    let z_star = problem.known_saddle().unwrap().to_owned();
    let mut state =
        init_state(AlgorithmKind::Desm, &problem, &topo, &schedule, z_star.view()).unwrap();
    for _ in 0..20 {
        desm_step(&mut state, &problem, &topo, &schedule).unwrap();
        let mean = state.mean_iterate();
        let dist = (&mean - &z_star).dot(&(&mean - &z_star)).sqrt();
        assert!(dist <= 1e-10);
    }
}

#[test]
fn desm_single_component_single_agent_is_deterministic_eg() {
    let problem = make_quadratic(1, 1, 2, 2, 1.0, 3.0, 31).unwrap();
    let topo = build_topology(TopologyKind::Complete, 1).unwrap();
    let schedule = manual_schedule(0.05, 40, 1, 4);
    let z0 = array![0.5, 0.5, -0.5, 0.2];
    let mut state =
        init_state(AlgorithmKind::Desm, &problem, &topo, &schedule, z0.view()).unwrap();
    let mut z = z0.clone();
    for _ in 0..40 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        let g = problem.local_full_gradient(0, z.view()).unwrap();
        let half = &z - &(&g * schedule.eta);
        let gh = problem.local_full_gradient(0, half.view()).unwrap();
        z = &z - &(&gh * schedule.eta);
        for (a, b) in state.iterate().row(0).iter().zip(z.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn ledger_counts_are_exact() {
    let problem = make_quadratic(5, 8, 2, 2, 1.0, 6.0, 37).unwrap();
    let topo = build_topology(TopologyKind::Ring, 5).unwrap();
    let n = 8u64;

    // MC-SVRE: comm = K0 + K * fastmix_calls with 4 calls per iteration
    // plus one per refresh; sfo = n (init) + l per iteration + n per
    // refresh.
    let mut schedule = manual_schedule(0.01, 200, 3, 12);
    schedule.warmup_k0 = 7;
    schedule.p = 1.0 / 16.0;
    schedule.alpha = 1.0 - schedule.p;
    let mut state = init_state(
        AlgorithmKind::McSvre,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(4).view(),
    )
    .unwrap();
    for _ in 0..200 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
    }
    let led = state.ledger();
    let refreshes = led.refreshes;
    assert_eq!(led.fastmix_calls, 4 * 200 + refreshes);
    assert_eq!(led.comm_rounds, 7 + 3 * led.fastmix_calls);
    assert_eq!(led.sfo_per_agent, n + 200 + refreshes * n);

    // MC-EG: 4 FastMix calls and exactly 2n SFO per iteration.
    let schedule = manual_schedule(0.01, 50, 2, 0);
    let mut state = init_state(
        AlgorithmKind::McEg,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(4).view(),
    )
    .unwrap();
    let mut prev_sfo = state.ledger().sfo_per_agent;
    assert_eq!(prev_sfo, n);
    for _ in 0..50 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        let now = state.ledger().sfo_per_agent;
        assert_eq!(now - prev_sfo, 2 * n);
        prev_sfo = now;
    }
    assert_eq!(state.ledger().fastmix_calls, 200);
    assert_eq!(state.ledger().comm_rounds, 2 + 2 * 200);

    // GT-EG and DESM: two gossip rounds per iteration.
    let schedule = manual_schedule(0.005, 30, 1, 0);
    let mut state = init_state(
        AlgorithmKind::GtEg,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(4).view(),
    )
    .unwrap();
    for _ in 0..30 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
    }
    assert_eq!(state.ledger().comm_rounds, 60);
    assert_eq!(state.ledger().sfo_per_agent, n + 2 * n * 30);

    let mut state = init_state(
        AlgorithmKind::Desm,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(4).view(),
    )
    .unwrap();
    for _ in 0..30 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
    }
    assert_eq!(state.ledger().comm_rounds, 60);
    assert_eq!(state.ledger().sfo_per_agent, 60);
}

#[test]
fn divergence_raises_non_finite_error() {
    let problem = make_quadratic(3, 4, 2, 2, 1.0, 50.0, 2).unwrap();
    let topo = build_topology(TopologyKind::Ring, 3).unwrap();
    // Step size far beyond stability.
    let schedule = manual_schedule(1e6, 500, 1, 0);
    let mut state = init_state(
        AlgorithmKind::McEg,
        &problem,
        &topo,
        &schedule,
        Array1::ones(4).view(),
    )
    .unwrap();
    let mut saw_error = false;
    for _ in 0..500 {
        match step(&mut state, &problem, &topo, &schedule) {
            Ok(()) => continue,
            Err(saddlenet_core::Error::NonFiniteIterate(_)) => {
                saw_error = true;
                break;
            }
            Err(other) => panic!("unexpected error {other:?}"),
        }
    }
    assert!(saw_error, "divergence guard never fired");
}

#[test]
fn svre_consensus_residual_stays_bounded() {
    // Boundedness proxy for the consensus recursion: the combined residual
    // ||z - 1 zbar||^2 + ||w - 1 wbar||^2 + eta^2 ||s - 1 sbar||^2 never
    // exceeds 100x its starting value under the theory schedule.
    let problem = make_quadratic(10, 10, 3, 3, 1.0, 20.0, 41).unwrap();
    let topo = build_topology(TopologyKind::RandomGnp { prob: 0.5, seed: 1 }, 10).unwrap();
    let schedule = make_schedule(
        AlgorithmKind::McSvre,
        ScheduleMode::TheoryScscUnconstrained,
        &problem,
        &topo,
        1e-6,
        &ScheduleOverrides::default(),
    )
    .unwrap();
    let mut state = init_state(
        AlgorithmKind::McSvre,
        &problem,
        &topo,
        &schedule,
        Array1::ones(6).view(),
    )
    .unwrap();

    let residual = |state: &saddlenet_core::SolverState| -> f64 {
        let cz = consensus_error(&AggregateState::new(state.iterate().clone()).unwrap());
        let cw = consensus_error(&AggregateState::new(state.snapshot().unwrap().clone()).unwrap());
        let cs = consensus_error(&AggregateState::new(state.tracked().unwrap().clone()).unwrap());
        cz * cz + cw * cw + schedule.eta * schedule.eta * cs * cs
    };
    // Scale: the raw (unmixed) initial gradient spread. Warmup mixing
    // shrinks the stored residual below this; the run must never push it
    // back past 100x the raw scale.
    let raw = problem.aggregate_gradient(state.iterate());
    let raw_spread = consensus_error(&AggregateState::new(raw).unwrap());
    let r0 = (schedule.eta * schedule.eta * raw_spread * raw_spread).max(1e-30);
    for _ in 0..300 {
        step(&mut state, &problem, &topo, &schedule).unwrap();
        let r = residual(&state);
        assert!(r <= 100.0 * r0, "residual blew up: {r} vs initial scale {r0}");
    }
}

fn best_fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[test]
fn svre_theory_schedule_converges_linearly_small() {
    let problem = make_quadratic(5, 10, 3, 3, 1.0, 10.0, 43).unwrap();
    let topo = build_topology(TopologyKind::Ring, 5).unwrap();
    let eps = 1e-8;
    let schedule = make_schedule(
        AlgorithmKind::McSvre,
        ScheduleMode::TheoryScscUnconstrained,
        &problem,
        &topo,
        eps,
        &ScheduleOverrides::default(),
    )
    .unwrap();
    let options = RunOptions {
        metric_cadence: 25,
        stop_dist_sq: Some(eps),
        ..RunOptions::default()
    };
    let outcome = run(
        AlgorithmKind::McSvre,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(6).view(),
        &options,
        None,
    )
    .unwrap();
    let trace = &outcome.trace;
    trace.validate().unwrap();
    let last = trace.rows.last().unwrap();
    let dist = last.dist_to_saddle.unwrap();
    assert!(
        dist * dist <= eps,
        "did not reach the target within T = {}: {}",
        schedule.total_t,
        dist * dist
    );
    assert!(last.t <= schedule.total_t);

    let pts: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter_map(|r| r.dist_to_saddle.map(|d| (r.t as f64, (d * d).max(1e-300).ln())))
        .collect();
    assert!(best_fit_slope(&pts) < 0.0);
}

#[test]
fn run_records_initialization_row_for_zero_iterations() {
    let problem = make_quadratic(3, 4, 2, 2, 1.0, 3.0, 47).unwrap();
    let topo = build_topology(TopologyKind::Ring, 3).unwrap();
    let mut schedule = manual_schedule(0.01, 1, 1, 0);
    schedule.total_t = 0;
    let outcome = run(
        AlgorithmKind::McEg,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(4).view(),
        &RunOptions::default(),
        None,
    )
    .unwrap();
    assert_eq!(outcome.trace.rows.len(), 1);
    assert_eq!(outcome.trace.rows[0].t, 0);
    assert_eq!(outcome.final_mean, Array1::<f64>::zeros(4));
}

#[test]
fn runs_replay_bit_identically() {
    let problem = make_quadratic(4, 6, 2, 2, 0.9, 7.0, 53).unwrap();
    let topo = build_topology(TopologyKind::RandomGnp { prob: 0.7, seed: 4 }, 4).unwrap();
    let mut schedule = manual_schedule(0.02, 80, 2, 99);
    schedule.p = 1.0 / 12.0;
    schedule.alpha = 1.0 - schedule.p;

    let go = || {
        run(
            AlgorithmKind::McSvre,
            &problem,
            &topo,
            &schedule,
            Array1::zeros(4).view(),
            &RunOptions::default(),
            None,
        )
        .unwrap()
    };
    let a = go();
    let b = go();
    assert_eq!(a.trace.rows.len(), b.trace.rows.len());
    for (ra, rb) in a.trace.rows.iter().zip(b.trace.rows.iter()) {
        assert_eq!(serde_json::to_string(ra).unwrap(), serde_json::to_string(rb).unwrap());
    }
    assert_eq!(a.final_mean, b.final_mean);

    // Different seed, different refresh pattern.
    let mut other = schedule.clone();
    other.seed = 100;
    let c = run(
        AlgorithmKind::McSvre,
        &problem,
        &topo,
        &other,
        Array1::zeros(4).view(),
        &RunOptions::default(),
        None,
    )
    .unwrap();
    assert_ne!(
        serde_json::to_string(&a.trace.rows.last().unwrap().consensus_err).unwrap(),
        serde_json::to_string(&c.trace.rows.last().unwrap().consensus_err).unwrap()
    );
}

#[test]
fn eg_central_reference_solves_small_instances() {
    let problem = make_quadratic(2, 5, 3, 3, 1.0, 6.0, 59).unwrap();
    let topo = build_topology(TopologyKind::Complete, 2).unwrap();
    let schedule = manual_schedule(1.0 / (6.0 * problem.smoothness()), 4000, 1, 0);
    let z_star = problem.known_saddle().unwrap().to_owned();
    let outcome = run(
        AlgorithmKind::EgCentral,
        &problem,
        &topo,
        &schedule,
        Array1::zeros(6).view(),
        &RunOptions {
            metric_cadence: 200,
            stop_dist_sq: Some(1e-24),
            ..RunOptions::default()
        },
        None,
    )
    .unwrap();
    let mean = outcome.final_mean;
    let dist = (&mean - &z_star).dot(&(&mean - &z_star)).sqrt();
    assert!(dist <= 1e-10, "centralized EG should nail the saddle: {dist}");
}
