//! Distributionally robust logistic regression with an l1-ball weight
//! constraint and a simplex-constrained sample reweighting.
//!
//! `f_{i,j}(x, y) = y_{i,j} l_{i,j}(x) + (lambda2/2)||x||^2 - V(y)` with
//! `l_{i,j}(x) = log(1 + exp(-b a'x))` and `V(y) = (lambda3/2)||mn y - 1||^2`.
//! The dual vector `y` lives on the simplex over all `mn` samples and is
//! replicated at every agent, like `x`.

use ndarray::{s, Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Block, ConstraintSet};
use crate::problems::{auc::sample_components, estimate_smoothness, Dataset, Oracle, SaddleProblem};

pub(crate) struct DroOracle {
    feats: ndarray::Array2<f64>,
    labels: Vec<f64>,
    lambda2: f64,
    lambda3: f64,
    d_feat: usize,
    mn: usize,
}

/// log(1 + exp(-t)) without overflow.
fn softplus_neg(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// sigma(-t) = 1 / (1 + exp(t)) without overflow.
fn sigmoid_neg(t: f64) -> f64 {
    if t > 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

impl DroOracle {
    pub(crate) fn grad(&self, i: usize, j: usize, z: ArrayView1<'_, f64>, n: usize) -> Array1<f64> {
        let idx = i * n + j;
        let a = self.feats.row(idx);
        let b = self.labels[idx];
        let x = z.slice(s![..self.d_feat]);
        let y = z.slice(s![self.d_feat..]);
        let margin = b * x.dot(&a);
        let sig = sigmoid_neg(margin);
        let loss = softplus_neg(margin);
        let mn = self.mn as f64;

        let mut out = Array1::zeros(self.d_feat + self.mn);
        // grad_x = y_idx * (-b sigma) a + lambda2 x
        let coef = -b * sig * y[idx];
        for k in 0..self.d_feat {
            out[k] = coef * a[k] + self.lambda2 * x[k];
        }
        // -grad_y = -(loss e_idx - lambda3 mn (mn y - 1))
        for k in 0..self.mn {
            out[self.d_feat + k] = self.lambda3 * mn * (mn * y[k] - 1.0);
        }
        out[self.d_feat + idx] -= loss;
        out
    }

    pub(crate) fn value(&self, i: usize, j: usize, z: ArrayView1<'_, f64>, n: usize) -> f64 {
        let idx = i * n + j;
        let a = self.feats.row(idx);
        let b = self.labels[idx];
        let x = z.slice(s![..self.d_feat]);
        let y = z.slice(s![self.d_feat..]);
        let margin = b * x.dot(&a);
        let loss = softplus_neg(margin);
        let mn = self.mn as f64;
        let v: f64 = y.iter().map(|yi| (mn * yi - 1.0) * (mn * yi - 1.0)).sum();
        y[idx] * loss + 0.5 * self.lambda2 * x.dot(&x) - 0.5 * self.lambda3 * v
    }
}

/// Builds the DRO problem on the first `m * n` samples of `dataset`, with
/// `X = {||x||_1 <= lambda1}` and `Y` the probability simplex over all
/// `m * n` sample weights.
pub fn make_dro(
    dataset: &Dataset,
    m: usize,
    n: usize,
    lambda1: f64,
    lambda2: f64,
    lambda3: f64,
) -> Result<SaddleProblem> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidSize("m and n must be positive".into()));
    }
    if !(lambda1 > 0.0) || lambda2 < 0.0 || lambda3 < 0.0 {
        return Err(Error::InvalidConstants(format!(
            "need lambda1 > 0 and lambda2, lambda3 >= 0; got {lambda1}, {lambda2}, {lambda3}"
        )));
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
    let d_feat = used.dim();
    let mn = need;

    let oracle = DroOracle {
        feats: ndarray::Array2::from_shape_fn((mn, d_feat), |(r, c)| used.feature_row(r)[c]),
        labels: used.labels().to_vec(),
        lambda2,
        lambda3,
        d_feat,
        mn,
    };

    let constraint = ConstraintSet::new(vec![
        Block::L1Ball {
            dim: d_feat,
            radius: lambda1,
        },
        Block::Simplex { dim: mn },
    ])?;

    let d = d_feat + mn;
    // Probes for Hessian sampling: uniform weights, a simplex vertex, and
    // one random feasible point. The logistic curvature peaks at x = 0.
    let mut probes = Vec::new();
    let mut uniform = Array1::zeros(d);
    for k in 0..mn {
        uniform[d_feat + k] = 1.0 / mn as f64;
    }
    probes.push(uniform);
    let mut vertex = Array1::zeros(d);
    vertex[d_feat] = 1.0;
    probes.push(vertex);
    let mut rng = ChaCha8Rng::seed_from_u64(0xd60);
    let raw = Array1::from_shape_fn(d, |_| rng.random::<f64>() * 2.0 - 1.0);
    probes.push(constraint.project(raw.view())?);

    let samples = sample_components(m, n, 128);
    let grad = |i: usize, j: usize, z: ArrayView1<'_, f64>| {
        let mut g = oracle.grad(i, j, z, n);
        for v in g.iter_mut().skip(d_feat) {
            *v = -*v;
        }
        g
    };
    let smoothness = estimate_smoothness(&grad, d, &samples, &probes).max(lambda2);

    // lambda2-strong convexity in x, lambda3 (mn)^2-strong concavity in y.
    let strong_convexity = lambda2.min(lambda3 * (mn * mn) as f64);

    Ok(SaddleProblem {
        m,
        n,
        dx: d_feat,
        dy: mn,
        constraint,
        smoothness,
        strong_convexity,
        known_saddle: None,
        oracle: Oracle::Dro(oracle),
        kind_name: "dro",
    })
}
