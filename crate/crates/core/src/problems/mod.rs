//! Finite-sum saddle-point problems with per-component gradient oracles.
//!
//! Every problem is a bundle `f(x, y) = (1/m) sum_i f_i(x, y)` with
//! `f_i = (1/n) sum_j f_{i,j}`, exposed through the signed operator
//! `g_{i,j}(z) = [grad_x f_{i,j}; -grad_y f_{i,j}]` for `z = [x; y]`.
//! The y-block sign flip makes the operator monotone for convex-concave
//! components, which is what the extragradient solvers consume.

mod auc;
mod dataset;
mod dro;
mod quadratic;

pub use auc::make_auc;
pub use dataset::{load_libsvm, partition, Dataset};
pub use dro::make_dro;
pub use quadratic::{make_quadratic, quadratic_from_parts};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;

pub(crate) enum Oracle {
    Quadratic(quadratic::QuadraticOracle),
    Auc(auc::AucOracle),
    Dro(dro::DroOracle),
}

/// A finite-sum minimax problem instance.
pub struct SaddleProblem {
    pub(crate) m: usize,
    pub(crate) n: usize,
    pub(crate) dx: usize,
    pub(crate) dy: usize,
    pub(crate) constraint: ConstraintSet,
    /// Component smoothness constant `L`.
    pub(crate) smoothness: f64,
    /// Strong convexity-concavity modulus `mu` (0 for merely convex-concave).
    pub(crate) strong_convexity: f64,
    pub(crate) known_saddle: Option<Array1<f64>>,
    pub(crate) oracle: Oracle,
    pub(crate) kind_name: &'static str,
}

impl SaddleProblem {
    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn components_per_agent(&self) -> usize {
        self.n
    }

    pub fn dx(&self) -> usize {
        self.dx
    }

    pub fn dy(&self) -> usize {
        self.dy
    }

    /// Flattened variable dimension `d = dx + dy`.
    pub fn dim(&self) -> usize {
        self.dx + self.dy
    }

    pub fn constraint(&self) -> &ConstraintSet {
        &self.constraint
    }

    pub fn smoothness(&self) -> f64 {
        self.smoothness
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    /// Condition number `kappa = L / mu`; infinite when `mu = 0`.
    pub fn condition_number(&self) -> f64 {
        if self.strong_convexity > 0.0 {
            self.smoothness / self.strong_convexity
        } else {
            f64::INFINITY
        }
    }

    pub fn known_saddle(&self) -> Option<ArrayView1<'_, f64>> {
        self.known_saddle.as_ref().map(|z| z.view())
    }

    /// Overrides the smoothness certificate (it is an estimate for the
    /// data-driven problems).
    pub fn with_smoothness(mut self, l: f64) -> Self {
        self.smoothness = l;
        self
    }

    pub fn with_strong_convexity(mut self, mu: f64) -> Self {
        self.strong_convexity = mu;
        self
    }

    pub fn with_known_saddle(mut self, z: Array1<f64>) -> Self {
        self.known_saddle = Some(z);
        self
    }

    pub fn kind_name(&self) -> &'static str {
        self.kind_name
    }

    /// Signed component operator `g_{i,j}(z) = [grad_x f_{i,j}; -grad_y f_{i,j}]`.
    pub fn grad_component(&self, i: usize, j: usize, z: ArrayView1<'_, f64>) -> Array1<f64> {
        debug_assert!(i < self.m && j < self.n);
        match &self.oracle {
            Oracle::Quadratic(o) => o.grad(i, j, z, self.n),
            Oracle::Auc(o) => o.grad(i, j, z, self.n),
            Oracle::Dro(o) => o.grad(i, j, z, self.n),
        }
    }

    /// Scalar value `f_{i,j}(z)`.
    pub fn value_component(&self, i: usize, j: usize, z: ArrayView1<'_, f64>) -> f64 {
        debug_assert!(i < self.m && j < self.n);
        match &self.oracle {
            Oracle::Quadratic(o) => o.value(i, j, z, self.n),
            Oracle::Auc(o) => o.value(i, j, z, self.n),
            Oracle::Dro(o) => o.value(i, j, z, self.n),
        }
    }

    /// Plain component gradient `grad f_{i,j}` (no sign flip on the
    /// y-block); used by finite-difference checks and smoothness probing.
    pub fn plain_grad_component(&self, i: usize, j: usize, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut g = self.grad_component(i, j, z);
        for v in g.iter_mut().skip(self.dx) {
            *v = -*v;
        }
        g
    }

    /// Local full operator `g_i(z) = (1/n) sum_j g_{i,j}(z)`.
    ///
    /// Costs `n` oracle calls, ledgered by the caller.
    pub fn local_full_gradient(&self, i: usize, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if i >= self.m {
            return Err(Error::IndexOutOfRange(format!(
                "agent {i} out of range for m = {}",
                self.m
            )));
        }
        let mut acc = Array1::zeros(self.dim());
        for j in 0..self.n {
            acc += &self.grad_component(i, j, z);
        }
        acc /= self.n as f64;
        Ok(acc)
    }

    /// Stacked local full operators: row `i` is `g_i(Z(i))`.
    pub fn aggregate_gradient(&self, z: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.m, self.dim()));
        for i in 0..self.m {
            let gi = self
                .local_full_gradient(i, z.row(i))
                .expect("agent index in range");
            out.row_mut(i).assign(&gi);
        }
        out
    }

    /// Global mean operator `g(z) = (1/(mn)) sum_{i,j} g_{i,j}(z)` at one
    /// point `z`.
    pub fn mean_operator(&self, z: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut acc = Array1::zeros(self.dim());
        for i in 0..self.m {
            for j in 0..self.n {
                acc += &self.grad_component(i, j, z);
            }
        }
        acc /= (self.m * self.n) as f64;
        acc
    }

    /// Global objective `f(z) = (1/(mn)) sum_{i,j} f_{i,j}(z)`.
    pub fn value(&self, z: ArrayView1<'_, f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.m {
            for j in 0..self.n {
                acc += self.value_component(i, j, z);
            }
        }
        acc / (self.m * self.n) as f64
    }
}

/// Largest sampled component Hessian norm, times a 1.1 safety factor.
///
/// Runs power iteration on the (symmetric) Jacobian of the plain gradient,
/// with matrix-vector products taken by central differences. `probes` are
/// the points the Hessians are evaluated at; `samples` the component
/// indices to scan.
pub(crate) fn estimate_smoothness(
    problem_grad: &dyn Fn(usize, usize, ArrayView1<'_, f64>) -> Array1<f64>,
    dim: usize,
    samples: &[(usize, usize)],
    probes: &[Array1<f64>],
) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5e1f);
    let fd_step = 1e-5;
    let mut worst: f64 = 0.0;
    for &(i, j) in samples {
        for z in probes {
            let mut u = Array1::from_shape_fn(dim, |_| rng.random::<f64>() * 2.0 - 1.0);
            let norm = u.dot(&u).sqrt();
            if norm == 0.0 {
                continue;
            }
            u /= norm;
            let mut lam = 0.0;
            for _ in 0..40 {
                let plus = problem_grad(i, j, (z + &(&u * fd_step)).view());
                let minus = problem_grad(i, j, (z - &(&u * fd_step)).view());
                let hu = (&plus - &minus) / (2.0 * fd_step);
                lam = hu.dot(&hu).sqrt();
                if lam <= 1e-14 {
                    break;
                }
                u = hu / lam;
            }
            worst = worst.max(lam);
        }
    }
    1.1 * worst
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::Rng;

    /// Central finite differences of the scalar component loss, with the
    /// y-block sign flipped, compared against the operator oracle.
    pub fn finite_difference_check(
        problem: &SaddleProblem,
        rng: &mut rand_chacha::ChaCha8Rng,
        probes: usize,
        tol: f64,
        scale: f64,
    ) {
        let d = problem.dim();
        let h = 1e-6;
        for _ in 0..probes {
            let i = rng.random_range(0..problem.agents());
            let j = rng.random_range(0..problem.components_per_agent());
            let z = Array1::from_shape_fn(d, |_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
            let g = problem.grad_component(i, j, z.view());
            let mut fd = Array1::zeros(d);
            for k in 0..d {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[k] += h;
                zm[k] -= h;
                fd[k] = (problem.value_component(i, j, zp.view())
                    - problem.value_component(i, j, zm.view()))
                    / (2.0 * h);
            }
            // flip the y-block to match the signed operator
            for v in fd.iter_mut().skip(problem.dx()) {
                *v = -*v;
            }
            let diff = (&fd - &g).mapv(|x| x * x).sum().sqrt();
            let norm = g.mapv(|x| x * x).sum().sqrt();
            assert!(
                diff <= tol * (1.0 + norm),
                "finite differences disagree: i={i} j={j} diff={diff} norm={norm}"
            );
        }
    }

    /// Monotonicity of the global mean operator on sampled (feasible) pairs:
    /// `<g(z)-g(z'), z-z'> >= 0.99 mu ||z-z'||^2` (or just >= -1e-10 for
    /// merely convex-concave instances).
    pub fn monotonicity_check(
        problem: &SaddleProblem,
        rng: &mut rand_chacha::ChaCha8Rng,
        pairs: usize,
        scale: f64,
    ) {
        let d = problem.dim();
        let mu = problem.strong_convexity();
        for _ in 0..pairs {
            let raw_a = Array1::from_shape_fn(d, |_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
            let raw_b = Array1::from_shape_fn(d, |_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
            let a = problem.constraint().project(raw_a.view()).unwrap();
            let b = problem.constraint().project(raw_b.view()).unwrap();
            let ga = problem.mean_operator(a.view());
            let gb = problem.mean_operator(b.view());
            let dz = &a - &b;
            let inner = (&ga - &gb).dot(&dz);
            let dist_sq = dz.dot(&dz);
            if mu > 0.0 {
                assert!(
                    inner >= 0.99 * mu * dist_sq - 1e-12,
                    "strong monotonicity violated: {inner} < {}",
                    0.99 * mu * dist_sq
                );
            } else {
                assert!(inner >= -1e-10, "monotonicity violated: {inner}");
            }
        }
    }

    /// Sampled Lipschitz certificate: component operator differences never
    /// exceed `1.01 L ||z - z'||`.
    pub fn lipschitz_check(
        problem: &SaddleProblem,
        rng: &mut rand_chacha::ChaCha8Rng,
        pairs: usize,
        scale: f64,
    ) {
        let d = problem.dim();
        let l = problem.smoothness();
        for _ in 0..pairs {
            let i = rng.random_range(0..problem.agents());
            let j = rng.random_range(0..problem.components_per_agent());
            let a = Array1::from_shape_fn(d, |_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
            let b = Array1::from_shape_fn(d, |_| (rng.random::<f64>() * 2.0 - 1.0) * scale);
            let ga = problem.grad_component(i, j, a.view());
            let gb = problem.grad_component(i, j, b.view());
            let num = (&ga - &gb).mapv(|x| x * x).sum().sqrt();
            let den = (&a - &b).mapv(|x| x * x).sum().sqrt();
            assert!(
                num <= 1.01 * l * den + 1e-12,
                "Lipschitz certificate violated: ratio {} vs L {l}",
                num / den
            );
        }
    }
}
