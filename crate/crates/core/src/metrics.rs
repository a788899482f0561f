//! Convergence and consensus diagnostics over iterate streams.

use ndarray::{Array1, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gossip::AggregateState;
use crate::problems::SaddleProblem;

/// Where metrics are evaluated: the mean iterate (the analysis object) or a
/// designated agent's local copy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EvalPoint {
    Mean,
    Agent(usize),
}

impl Default for EvalPoint {
    fn default() -> Self {
        EvalPoint::Mean
    }
}

/// One recorded iteration.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    /// Outer iteration counter.
    pub t: usize,
    /// SFO calls per agent divided by `n` (component passes).
    pub epoch: f64,
    pub comm_rounds: u64,
    pub grad_norm: f64,
    pub grad_mapping_norm: f64,
    pub consensus_err: f64,
    /// `||z - z*||` against the known or reference saddle, when available.
    pub dist_to_saddle: Option<f64>,
    /// Duality-gap estimate of the running ergodic average, when tracked.
    pub ergodic_gap: Option<f64>,
}

/// Run provenance attached to a trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceMeta {
    pub algorithm: String,
    pub problem: String,
    pub topology: String,
    pub schedule: String,
    pub seed: u64,
    /// Oracle calls spent on metric evaluation; kept out of the solver's
    /// SFO ledger.
    pub metric_oracle_calls: u64,
}

/// Per-iteration records plus provenance.
#[derive(Debug, Clone, Serialize)]
pub struct RunTrace {
    pub rows: Vec<TraceRow>,
    pub meta: TraceMeta,
}

impl RunTrace {
    /// Checks the structural invariants: counters monotone, metrics finite.
    pub fn validate(&self) -> Result<()> {
        for pair in self.rows.windows(2) {
            if pair[1].t <= pair[0].t {
                return Err(Error::InvalidConstants("t must be strictly increasing".into()));
            }
            if pair[1].comm_rounds < pair[0].comm_rounds || pair[1].epoch < pair[0].epoch {
                return Err(Error::InvalidConstants("ledger must be nondecreasing".into()));
            }
        }
        for row in &self.rows {
            let finite = row.epoch.is_finite()
                && row.grad_norm.is_finite()
                && row.grad_mapping_norm.is_finite()
                && row.consensus_err.is_finite()
                && row.dist_to_saddle.map_or(true, f64::is_finite)
                && row.ergodic_gap.map_or(true, f64::is_finite);
            if !finite {
                return Err(Error::InvalidConstants(format!(
                    "non-finite metric at t = {}",
                    row.t
                )));
            }
        }
        Ok(())
    }

    /// First row whose `metric` is at or below `target`; returns the row.
    pub fn first_at_or_below<F: Fn(&TraceRow) -> f64>(
        &self,
        metric: F,
        target: f64,
    ) -> Option<&TraceRow> {
        self.rows.iter().find(|row| metric(row) <= target)
    }
}

/// `||g(z)||_2` of the global mean operator at `z`.
pub fn grad_operator_norm(problem: &SaddleProblem, z: ArrayView1<'_, f64>) -> f64 {
    let g = problem.mean_operator(z);
    g.dot(&g).sqrt()
}

/// Gradient mapping `h(z) = ||z - P_Z(z - tau g(z))|| / tau`; collapses to
/// `||g(z)||` on unconstrained sets.
pub fn grad_mapping_norm(problem: &SaddleProblem, z: ArrayView1<'_, f64>, tau: f64) -> f64 {
    assert!(tau > 0.0, "tau must be positive");
    let g = problem.mean_operator(z);
    let shifted = &z.to_owned() - &(g * tau);
    let projected = problem
        .constraint()
        .project(shifted.view())
        .expect("dimensions agree by construction");
    let diff = &z.to_owned() - &projected;
    diff.dot(&diff).sqrt() / tau
}

/// Consensus error `||Z - 1 zbar||_F`.
pub fn consensus_error(z: &AggregateState) -> f64 {
    consensus_error_mat(z.data())
}

pub(crate) fn consensus_error_mat(z: &ndarray::Array2<f64>) -> f64 {
    let m = z.nrows();
    let mean = z.mean_axis(ndarray::Axis(0)).expect("nonempty");
    let mut sum = 0.0;
    for i in 0..m {
        for (a, b) in z.row(i).iter().zip(mean.iter()) {
            sum += (a - b) * (a - b);
        }
    }
    sum.sqrt()
}

/// Duality gap estimate `f(x_hat, y*) - f(x*, y_hat)` against a reference
/// saddle `z* = [x*; y*]`.
pub fn duality_gap_estimate(
    problem: &SaddleProblem,
    x_hat: ArrayView1<'_, f64>,
    y_hat: ArrayView1<'_, f64>,
    reference: Option<ArrayView1<'_, f64>>,
) -> Result<f64> {
    let z_star = reference.ok_or(Error::MissingReference)?;
    let (dx, dy) = (problem.dx(), problem.dy());
    if x_hat.len() != dx || y_hat.len() != dy || z_star.len() != dx + dy {
        return Err(Error::DimensionMismatch(
            "gap estimate received wrong block sizes".into(),
        ));
    }
    let mut left = Array1::zeros(dx + dy);
    left.slice_mut(ndarray::s![..dx]).assign(&x_hat);
    left.slice_mut(ndarray::s![dx..])
        .assign(&z_star.slice(ndarray::s![dx..]));
    let mut right = Array1::zeros(dx + dy);
    right
        .slice_mut(ndarray::s![..dx])
        .assign(&z_star.slice(ndarray::s![..dx]));
    right.slice_mut(ndarray::s![dx..]).assign(&y_hat);
    Ok(problem.value(left.view()) - problem.value(right.view()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_quadratic, quadratic_from_parts};
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bilinear() -> SaddleProblem {
        // f(x, y) = x y, so g(z) = [y; -x]... with the sign flip the
        // operator is [y; -x].
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
    fn operator_norm_hand_cases() {
        let p = bilinear();
        // z = (1, 0): g = [0; -1], norm 1.
        assert_abs_diff_eq!(
            grad_operator_norm(&p, array![1.0, 0.0].view()),
            1.0,
            epsilon = 1e-15
        );

        let q = make_quadratic(2, 3, 2, 2, 1.0, 5.0, 4).unwrap();
        let z_star = q.known_saddle().unwrap().to_owned();
        assert!(grad_operator_norm(&q, z_star.view()) <= 1e-9);

        // Homogeneous quadratic: doubling z doubles the norm.
        let h = quadratic_from_parts(
            1,
            2,
            vec![array![[2.0]], array![[0.5]]],
            vec![array![0.0]; 2],
            vec![array![0.0]; 2],
            1.0,
            None,
        )
        .unwrap();
        let z = array![0.7, -0.4];
        let z2 = array![1.4, -0.8];
        assert_abs_diff_eq!(
            2.0 * grad_operator_norm(&h, z.view()),
            grad_operator_norm(&h, z2.view()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn gradient_mapping_collapses_when_unconstrained() {
        let p = make_quadratic(2, 2, 3, 2, 0.5, 4.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let z = Array1::from_shape_fn(p.dim(), |_| rng.random::<f64>() * 4.0 - 2.0);
            let a = grad_mapping_norm(&p, z.view(), 0.5);
            let b = grad_operator_norm(&p, z.view());
            assert!((a - b).abs() <= 1e-12 * (1.0 + b));
        }
    }

    #[test]
    fn consensus_error_cases() {
        let zero = AggregateState::replicate_row(4, array![1.0, 2.0].view());
        assert_eq!(consensus_error(&zero), 0.0);

        let pm = AggregateState::new(array![[1.0], [-1.0]]).unwrap();
        assert_abs_diff_eq!(consensus_error(&pm), std::f64::consts::SQRT_2, epsilon = 1e-15);

        // Row-wise summation oracle and translation invariance.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = Array2::from_shape_fn((6, 3), |_| rng.random::<f64>());
        let z = AggregateState::new(data.clone()).unwrap();
        let mean = z.mean_row();
        let oracle: f64 = (0..6)
            .map(|i| {
                z.row(i)
                    .iter()
                    .zip(mean.iter())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
            .sum::<f64>()
            .sqrt();
        assert_abs_diff_eq!(consensus_error(&z), oracle, epsilon = 1e-12);

        let shifted =
            AggregateState::new(&data + &Array2::from_elem((6, 3), 5.5)).unwrap();
        assert_abs_diff_eq!(
            consensus_error(&shifted),
            consensus_error(&z),
            epsilon = 1e-12
        );
    }

    #[test]
    fn duality_gap_cases() {
        let p = bilinear();
        // x_hat = 1, y_hat = 0 against z* = (0,0): f(1,0) - f(0,0) = 0.
        let gap = duality_gap_estimate(
            &p,
            array![1.0].view(),
            array![0.0].view(),
            Some(array![0.0, 0.0].view()),
        )
        .unwrap();
        assert_abs_diff_eq!(gap, 0.0, epsilon = 1e-15);

        assert!(matches!(
            duality_gap_estimate(&p, array![1.0].view(), array![0.0].view(), None),
            Err(Error::MissingReference)
        ));

        // Gap vanishes at the saddle and is nonnegative around it.
        let q = make_quadratic(2, 4, 2, 2, 1.0, 6.0, 3).unwrap();
        let z_star = q.known_saddle().unwrap().to_owned();
        let (xs, ys) = (z_star.slice(ndarray::s![..2]), z_star.slice(ndarray::s![2..]));
        let at_saddle = duality_gap_estimate(&q, xs, ys, Some(z_star.view())).unwrap();
        assert!(at_saddle.abs() <= 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x = Array1::from_shape_fn(2, |_| rng.random::<f64>() * 2.0 - 1.0);
            let y = Array1::from_shape_fn(2, |_| rng.random::<f64>() * 2.0 - 1.0);
            let gap = duality_gap_estimate(&q, x.view(), y.view(), Some(z_star.view())).unwrap();
            assert!(gap >= -1e-9, "gap nonnegativity violated: {gap}");
        }
    }
}
