//! Randomized quadratic saddle testbed with an analytically known solution.
//!
//! Components are `f_{i,j}(x, y) = (mu/2)||x||^2 + x' A_{i,j} y
//! - (mu/2)||y||^2 + b_{i,j}' x + c_{i,j}' y`. The component operator is
//! affine with Jacobian `[[mu I, A], [-A', mu I]]`, whose spectral norm is
//! exactly `sqrt(mu^2 + sigma_max(A)^2)`, so the smoothness constant is not
//! an estimate here.

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::ConstraintSet;
use crate::problems::{Oracle, SaddleProblem};

pub(crate) struct QuadraticOracle {
    /// Coupling matrices, indexed by `i * n + j`, each `dx x dy`.
    a: Vec<Array2<f64>>,
    b: Vec<Array1<f64>>,
    c: Vec<Array1<f64>>,
    mu: f64,
    dx: usize,
    dy: usize,
}

impl QuadraticOracle {
    pub(crate) fn grad(&self, i: usize, j: usize, z: ArrayView1<'_, f64>, n: usize) -> Array1<f64> {
        let idx = i * n + j;
        let (x, y) = (z.slice(ndarray::s![..self.dx]), z.slice(ndarray::s![self.dx..]));
        let a = &self.a[idx];
        let mut out = Array1::zeros(self.dx + self.dy);
        // grad_x = mu x + A y + b
        let ay = a.dot(&y);
        for k in 0..self.dx {
            out[k] = self.mu * x[k] + ay[k] + self.b[idx][k];
        }
        // -grad_y = -(A' x - mu y + c)
        let atx = a.t().dot(&x);
        for k in 0..self.dy {
            out[self.dx + k] = -atx[k] + self.mu * y[k] - self.c[idx][k];
        }
        out
    }

    pub(crate) fn value(&self, i: usize, j: usize, z: ArrayView1<'_, f64>, n: usize) -> f64 {
        let idx = i * n + j;
        let (x, y) = (z.slice(ndarray::s![..self.dx]), z.slice(ndarray::s![self.dx..]));
        let xx = x.dot(&x);
        let yy = y.dot(&y);
        let xay = x.dot(&self.a[idx].dot(&y));
        0.5 * self.mu * (xx - yy) + xay + self.b[idx].dot(&x) + self.c[idx].dot(&y)
    }
}

fn sigma_max(a: &Array2<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let mat = nalgebra::DMatrix::from_row_slice(a.nrows(), a.ncols(), a.as_slice().unwrap());
    mat.svd(false, false).singular_values.max()
}

/// Builds a quadratic problem from explicit coefficient lists.
///
/// `a`, `b`, `c` have `m * n` entries in `i * n + j` order. The smoothness
/// constant is computed exactly; a saddle is solved for when `mu > 0` and
/// the constraint is absent.
pub fn quadratic_from_parts(
    m: usize,
    n: usize,
    a: Vec<Array2<f64>>,
    b: Vec<Array1<f64>>,
    c: Vec<Array1<f64>>,
    mu: f64,
    constraint: Option<ConstraintSet>,
) -> Result<SaddleProblem> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidSize("m and n must be positive".into()));
    }
    if a.len() != m * n || b.len() != m * n || c.len() != m * n {
        return Err(Error::InvalidSize(format!(
            "need {} coefficient entries, got a={}, b={}, c={}",
            m * n,
            a.len(),
            b.len(),
            c.len()
        )));
    }
    if mu < 0.0 {
        return Err(Error::InvalidConstants("mu must be nonnegative".into()));
    }
    let dx = a[0].nrows();
    let dy = a[0].ncols();
    if a.iter().any(|m| m.nrows() != dx || m.ncols() != dy)
        || b.iter().any(|v| v.len() != dx)
        || c.iter().any(|v| v.len() != dy)
    {
        return Err(Error::DimensionMismatch("ragged coefficient shapes".into()));
    }

    let sig = a.iter().map(sigma_max).fold(0.0f64, f64::max);
    let smoothness = (mu * mu + sig * sig).sqrt();
    let constraint = constraint.unwrap_or_else(|| ConstraintSet::unconstrained(dx + dy));

    let known_saddle = if mu > 0.0 && constraint.is_unconstrained() {
        Some(solve_saddle(m, n, &a, &b, &c, mu, dx, dy)?)
    } else {
        None
    };

    Ok(SaddleProblem {
        m,
        n,
        dx,
        dy,
        constraint,
        smoothness,
        strong_convexity: mu,
        known_saddle,
        oracle: Oracle::Quadratic(QuadraticOracle { a, b, c, mu, dx, dy }),
        kind_name: "quadratic",
    })
}

/// Solves the stationarity system `mu x + Abar y + bbar = 0`,
/// `-Abar' x + mu y - cbar = 0` for the global saddle.
#[allow(clippy::too_many_arguments)]
fn solve_saddle(
    m: usize,
    n: usize,
    a: &[Array2<f64>],
    b: &[Array1<f64>],
    c: &[Array1<f64>],
    mu: f64,
    dx: usize,
    dy: usize,
) -> Result<Array1<f64>> {
    let count = (m * n) as f64;
    let mut abar = Array2::<f64>::zeros((dx, dy));
    let mut bbar = Array1::<f64>::zeros(dx);
    let mut cbar = Array1::<f64>::zeros(dy);
    for idx in 0..m * n {
        abar += &a[idx];
        bbar += &b[idx];
        cbar += &c[idx];
    }
    abar /= count;
    bbar /= count;
    cbar /= count;

    let d = dx + dy;
    let mut sys = nalgebra::DMatrix::<f64>::zeros(d, d);
    for k in 0..dx {
        sys[(k, k)] = mu;
    }
    for k in 0..dy {
        sys[(dx + k, dx + k)] = mu;
    }
    for r in 0..dx {
        for col in 0..dy {
            sys[(r, dx + col)] = abar[[r, col]];
            sys[(dx + col, r)] = -abar[[r, col]];
        }
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(d);
    for k in 0..dx {
        rhs[k] = -bbar[k];
    }
    for k in 0..dy {
        rhs[dx + k] = cbar[k];
    }
    let solution = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidConstants("singular stationarity system".into()))?;
    Ok(Array1::from_iter(solution.iter().copied()))
}

/// Random strongly-convex-strongly-concave quadratic instance with
/// component smoothness scaled to exactly `l_target`.
pub fn make_quadratic(
    m: usize,
    n: usize,
    dx: usize,
    dy: usize,
    mu: f64,
    l_target: f64,
    seed: u64,
) -> Result<SaddleProblem> {
    if !(mu > 0.0) || l_target < mu {
        return Err(Error::InvalidConstants(format!(
            "need 0 < mu <= L, got mu={mu}, L={l_target}"
        )));
    }
    if dx == 0 || dy == 0 {
        return Err(Error::InvalidSize("dx and dy must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut a: Vec<Array2<f64>> = (0..m * n)
        .map(|_| Array2::from_shape_fn((dx, dy), |_| normal.sample(&mut rng)))
        .collect();
    let b: Vec<Array1<f64>> = (0..m * n)
        .map(|_| Array1::from_shape_fn(dx, |_| normal.sample(&mut rng)))
        .collect();
    let c: Vec<Array1<f64>> = (0..m * n)
        .map(|_| Array1::from_shape_fn(dy, |_| normal.sample(&mut rng)))
        .collect();

    // Scale the couplings so max sigma_max(A_{i,j}) hits exactly
    // sqrt(L^2 - mu^2), making the worst component L-smooth.
    let sig_now = a.iter().map(sigma_max).fold(0.0f64, f64::max);
    let sig_target = (l_target * l_target - mu * mu).sqrt();
    let factor = if sig_now > 0.0 { sig_target / sig_now } else { 0.0 };
    for mat in &mut a {
        *mat *= factor;
    }

    quadratic_from_parts(m, n, a, b, c, mu, None)
}
