//! AUC maximization as an unconstrained saddle problem.
//!
//! The primal variable is `x = [theta; u; v]` (classifier weights plus the
//! two class-conditional score centers), the dual `y` is a scalar, and with
//! `q` the positive-class fraction each sample `(a, b)` contributes
//!
//! ```text
//! f(x, y) = (lambda/2)||x||^2 - q(1-q) y^2
//!         + (1-q) ((theta'a - u)^2 - 2(1+y) theta'a)   if b = +1
//!         + q     ((theta'a - v)^2 + 2(1+y) theta'a)   if b = -1
//! ```
//!
//! Each component is a quadratic form in `z = [x; y]`, so the operator is
//! affine and smoothness probing is exact.

use ndarray::{s, Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::problems::{estimate_smoothness, Dataset, Oracle, SaddleProblem};

pub(crate) struct AucOracle {
    feats: ndarray::Array2<f64>,
    labels: Vec<f64>,
    q: f64,
    lambda: f64,
    d_feat: usize,
}

impl AucOracle {
    pub(crate) fn grad(&self, i: usize, j: usize, z: ArrayView1<'_, f64>, n: usize) -> Array1<f64> {
        let idx = i * n + j;
        let a = self.feats.row(idx);
        let positive = self.labels[idx] > 0.0;
        let d = self.d_feat;
        let theta = z.slice(s![..d]);
        let (u, v, y) = (z[d], z[d + 1], z[d + 2]);
        let t = theta.dot(&a);
        let (q, lambda) = (self.q, self.lambda);

        let mut out = Array1::zeros(d + 3);
        let coef = if positive {
            2.0 * (1.0 - q) * ((t - u) - (1.0 + y))
        } else {
            2.0 * q * ((t - v) + (1.0 + y))
        };
        for k in 0..d {
            out[k] = lambda * theta[k] + coef * a[k];
        }
        out[d] = lambda * u - if positive { 2.0 * (1.0 - q) * (t - u) } else { 0.0 };
        out[d + 1] = lambda * v - if positive { 0.0 } else { 2.0 * q * (t - v) };
        // df/dy = -2q(1-q)y - 2(1-q)t [b=+1]  or  -2q(1-q)y + 2qt [b=-1];
        // the operator carries its negative.
        let dfdy = -2.0 * q * (1.0 - q) * y
            + if positive { -2.0 * (1.0 - q) * t } else { 2.0 * q * t };
        out[d + 2] = -dfdy;
        out
    }

    pub(crate) fn value(&self, i: usize, j: usize, z: ArrayView1<'_, f64>, n: usize) -> f64 {
        let idx = i * n + j;
        let a = self.feats.row(idx);
        let positive = self.labels[idx] > 0.0;
        let d = self.d_feat;
        let theta = z.slice(s![..d]);
        let (u, v, y) = (z[d], z[d + 1], z[d + 2]);
        let t = theta.dot(&a);
        let (q, lambda) = (self.q, self.lambda);

        let x_norm_sq = theta.dot(&theta) + u * u + v * v;
        let mut f = 0.5 * lambda * x_norm_sq - q * (1.0 - q) * y * y;
        if positive {
            f += (1.0 - q) * ((t - u) * (t - u) - 2.0 * (1.0 + y) * t);
        } else {
            f += q * ((t - v) * (t - v) + 2.0 * (1.0 + y) * t);
        }
        f
    }
}

/// Builds the AUC problem on the first `m * n` samples of `dataset`.
///
/// `mu` is certified as `min(lambda, 2q(1-q))` (the loss is
/// lambda-strongly convex in `x` and `2q(1-q)`-strongly concave in `y`);
/// `L` comes from exact Hessian probing of sampled components with a 1.1
/// safety factor. Both are overridable on the returned problem.
pub fn make_auc(dataset: &Dataset, m: usize, n: usize, lambda: f64) -> Result<SaddleProblem> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidSize("m and n must be positive".into()));
    }
    if lambda < 0.0 {
        return Err(Error::InvalidConstants("lambda must be nonnegative".into()));
    }
    let need = m * n;
    if dataset.n_samples() < need {
        return Err(Error::InsufficientSamples {
            need,
            have: dataset.n_samples(),
        });
    }
    let indices: Vec<usize> = (0..need).collect();
    let used = dataset.select(&indices)?;
    let positives = used.positives();
    if positives == 0 || positives == need {
        return Err(Error::SingleClassDataset);
    }
    let q = positives as f64 / need as f64;
    let d_feat = used.dim();
    let dx = d_feat + 2;
    let dy = 1;

    let oracle = AucOracle {
        feats: ndarray::Array2::from_shape_fn((need, d_feat), |(r, c)| used.feature_row(r)[c]),
        labels: used.labels().to_vec(),
        q,
        lambda,
        d_feat,
    };

    // The operator is affine, so one probe point per component suffices.
    let samples = sample_components(m, n, 256);
    let probes = vec![Array1::zeros(dx + dy)];
    let grad = |i: usize, j: usize, z: ArrayView1<'_, f64>| {
        let mut g = oracle.grad(i, j, z, n);
        let len = g.len();
        g[len - 1] = -g[len - 1];
        g
    };
    let smoothness = estimate_smoothness(&grad, dx + dy, &samples, &probes).max(lambda);

    let strong_convexity = lambda.min(2.0 * q * (1.0 - q));

    Ok(SaddleProblem {
        m,
        n,
        dx,
        dy,
        constraint: ConstraintSet::unconstrained(dx + dy),
        smoothness,
        strong_convexity,
        known_saddle: None,
        oracle: Oracle::Auc(oracle),
        kind_name: "auc",
    })
}

/// Deterministic spread of up to `cap` component indices.
pub(crate) fn sample_components(m: usize, n: usize, cap: usize) -> Vec<(usize, usize)> {
    let total = m * n;
    let take = total.min(cap);
    (0..take)
        .map(|k| {
            let idx = k * total / take;
            (idx / n, idx % n)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::test_support;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_dataset(n: usize, seed: u64, d: usize) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features = Array2::from_shape_fn((n, d), |_| rng.random::<f64>() - 0.5);
        let labels: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.3 { 1.0 } else { -1.0 })
            .collect();
        Dataset::from_parts(features, labels).unwrap()
    }

    #[test]
    fn y_gradient_matches_closed_form() {
        let ds = toy_dataset(12, 1, 4);
        let p = make_auc(&ds, 3, 4, 0.01).unwrap();
        let q = {
            let used = ds.select(&(0..12).collect::<Vec<_>>()).unwrap();
            used.positives() as f64 / 12.0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let i = rng.random_range(0..3);
            let j = rng.random_range(0..4);
            let z = Array1::from_shape_fn(p.dim(), |_| rng.random::<f64>() * 2.0 - 1.0);
            let g = p.grad_component(i, j, z.view());
            let theta = z.slice(s![..4]);
            let t = theta.dot(&ds.feature_row(i * 4 + j));
            let y = z[6];
            let dfdy = if ds.label(i * 4 + j) > 0.0 {
                -2.0 * q * (1.0 - q) * y - 2.0 * (1.0 - q) * t
            } else {
                -2.0 * q * (1.0 - q) * y + 2.0 * q * t
            };
            assert_abs_diff_eq!(g[p.dim() - 1], -dfdy, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_features_reduce_theta_gradient_to_regularizer() {
        let features = Array2::zeros((6, 3));
        let labels = vec![1.0, -1.0, 1.0, -1.0, -1.0, -1.0];
        let ds = Dataset::from_parts(features, labels).unwrap();
        let p = make_auc(&ds, 2, 3, 0.5).unwrap();
        let z = array![0.7, -0.3, 0.2, 0.0, 0.0, 0.0];
        let g = p.grad_component(0, 1, z.view());
        for k in 0..3 {
            assert_abs_diff_eq!(g[k], 0.5 * z[k], epsilon = 1e-15);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ds = toy_dataset(20, 3, 5);
        let p = make_auc(&ds, 4, 5, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        test_support::finite_difference_check(&p, &mut rng, 50, 1e-5, 1.5);
    }

    #[test]
    fn constants_are_certified() {
        let ds = toy_dataset(30, 5, 4);
        let p = make_auc(&ds, 5, 6, 0.01).unwrap();
        let used = ds.select(&(0..30).collect::<Vec<_>>()).unwrap();
        let q = used.positives() as f64 / 30.0;
        assert_abs_diff_eq!(
            p.strong_convexity(),
            0.01f64.min(2.0 * q * (1.0 - q)),
            epsilon = 1e-15
        );

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        test_support::lipschitz_check(&p, &mut rng, 400, 2.0);
        test_support::monotonicity_check(&p, &mut rng, 60, 2.0);
    }

    #[test]
    fn smoothness_estimate_covers_explicit_hessians() {
        let ds = toy_dataset(8, 7, 3);
        let p = make_auc(&ds, 2, 4, 0.05).unwrap();
        let d = p.dim();
        // Build each component Hessian column-by-column from the affine
        // plain gradient and take the exact spectral norm.
        let mut worst: f64 = 0.0;
        let origin = Array1::zeros(d);
        for i in 0..2 {
            for j in 0..4 {
                let g0 = p.plain_grad_component(i, j, origin.view());
                let mut h = nalgebra::DMatrix::<f64>::zeros(d, d);
                for col in 0..d {
                    let mut e = Array1::zeros(d);
                    e[col] = 1.0;
                    let gcol = p.plain_grad_component(i, j, e.view());
                    for row in 0..d {
                        h[(row, col)] = gcol[row] - g0[row];
                    }
                }
                worst = worst.max(
                    h.symmetric_eigen()
                        .eigenvalues
                        .iter()
                        .fold(0.0f64, |acc, v| acc.max(v.abs())),
                );
            }
        }
        assert!(p.smoothness() >= worst * 0.999, "estimate must cover the max");
        assert!(p.smoothness() <= worst * 1.11 + 1e-9, "estimate within the 1.1 factor");
    }

    #[test]
    fn class_and_size_preconditions() {
        let ds = toy_dataset(10, 9, 3);
        assert!(matches!(
            make_auc(&ds, 4, 5, 0.01),
            Err(Error::InsufficientSamples { need: 20, have: 10 })
        ));

        let one_class =
            Dataset::from_parts(Array2::zeros((6, 2)), vec![1.0; 6]).unwrap();
        assert!(matches!(
            make_auc(&one_class, 2, 3, 0.01),
            Err(Error::SingleClassDataset)
        ));
    }
}
