//! Product constraint sets and exact Euclidean projections.
//!
//! The feasible region is a product of primitive blocks; projection splits
//! the input vector at the block boundaries and projects each piece
//! independently. Simplex and l1-ball projections use the O(d log d)
//! sort-then-threshold method, which is exact up to floating point.

use ndarray::{s, Array1, ArrayView1, ArrayViewMut1};

use crate::error::{Error, Result};
use crate::gossip::AggregateState;

/// A primitive constraint block.
#[derive(Debug, Clone, PartialEq)]
pub enum Block {
    /// Free coordinates; projection is the identity.
    Unconstrained { dim: usize },
    /// `{ x : ||x||_1 <= radius }`
    L1Ball { dim: usize, radius: f64 },
    /// Per-coordinate interval `[lo_i, hi_i]`.
    Box { lo: Array1<f64>, hi: Array1<f64> },
    /// `{ x : x >= 0, sum x = 1 }`
    Simplex { dim: usize },
}

impl Block {
    pub fn dim(&self) -> usize {
        match self {
            Block::Unconstrained { dim } | Block::L1Ball { dim, .. } | Block::Simplex { dim } => {
                *dim
            }
            Block::Box { lo, .. } => lo.len(),
        }
    }

    fn diameter(&self) -> f64 {
        match self {
            Block::Unconstrained { .. } => f64::INFINITY,
            Block::L1Ball { radius, .. } => 2.0 * radius,
            Block::Box { lo, hi } => {
                let mut sum = 0.0;
                for (a, b) in lo.iter().zip(hi.iter()) {
                    sum += (b - a) * (b - a);
                }
                sum.sqrt()
            }
            Block::Simplex { .. } => std::f64::consts::SQRT_2,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Block::Unconstrained { dim } | Block::Simplex { dim } => {
                if *dim == 0 {
                    return Err(Error::InvalidSize("zero-dimensional block".into()));
                }
            }
            Block::L1Ball { dim, radius } => {
                if *dim == 0 {
                    return Err(Error::InvalidSize("zero-dimensional block".into()));
                }
                if !(*radius > 0.0) {
                    return Err(Error::InvalidConstants(format!(
                        "l1 radius must be positive, got {radius}"
                    )));
                }
            }
            Block::Box { lo, hi } => {
                if lo.is_empty() || lo.len() != hi.len() {
                    return Err(Error::InvalidSize("box bounds length mismatch".into()));
                }
                if lo.iter().zip(hi.iter()).any(|(a, b)| a > b) {
                    return Err(Error::InvalidConstants("box has lo > hi".into()));
                }
            }
        }
        Ok(())
    }

    fn project(&self, mut piece: ArrayViewMut1<'_, f64>) {
        match self {
            Block::Unconstrained { .. } => {}
            Block::Box { lo, hi } => {
                for ((v, a), b) in piece.iter_mut().zip(lo.iter()).zip(hi.iter()) {
                    *v = v.clamp(*a, *b);
                }
            }
            Block::Simplex { .. } => project_simplex(piece.as_slice_mut().expect("contiguous")),
            Block::L1Ball { radius, .. } => {
                project_l1_ball(piece.as_slice_mut().expect("contiguous"), *radius)
            }
        }
    }

    fn contains(&self, piece: ArrayView1<'_, f64>, tol: f64) -> bool {
        match self {
            Block::Unconstrained { .. } => true,
            Block::Box { lo, hi } => piece
                .iter()
                .zip(lo.iter())
                .zip(hi.iter())
                .all(|((v, a), b)| *v >= a - tol && *v <= b + tol),
            Block::Simplex { .. } => {
                piece.iter().all(|v| *v >= -tol)
                    && (piece.iter().sum::<f64>() - 1.0).abs() <= tol
            }
            Block::L1Ball { radius, .. } => {
                piece.iter().map(|v| v.abs()).sum::<f64>() <= radius + tol
            }
        }
    }
}

/// Sort-based projection onto the probability simplex.
fn project_simplex(v: &mut [f64]) {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Projection onto the l1 ball: identity inside, soft threshold outside.
fn project_l1_ball(v: &mut [f64], radius: f64) {
    let norm1: f64 = v.iter().map(|x| x.abs()).sum();
    if norm1 <= radius {
        return;
    }
    let mut sorted: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = x.signum() * (x.abs() - theta).max(0.0);
    }
}

/// Product set `Z = X x Y` assembled from primitive blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    blocks: Vec<Block>,
    total_dim: usize,
}

impl ConstraintSet {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidSize("constraint set needs at least one block".into()));
        }
        for b in &blocks {
            b.validate()?;
        }
        let total_dim = blocks.iter().map(Block::dim).sum();
        Ok(Self { blocks, total_dim })
    }

    /// Whole space of dimension `dim`.
    pub fn unconstrained(dim: usize) -> Self {
        Self {
            blocks: vec![Block::Unconstrained { dim }],
            total_dim: dim,
        }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn total_dim(&self) -> usize {
        self.total_dim
    }

    /// True when projection is the identity everywhere.
    pub fn is_unconstrained(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| matches!(b, Block::Unconstrained { .. }))
    }

    /// Diameter `D`: sqrt of the sum of squared block diameters, infinite
    /// if any block is unconstrained.
    pub fn diameter(&self) -> f64 {
        let mut sum = 0.0;
        for b in &self.blocks {
            let d = b.diameter();
            if d.is_infinite() {
                return f64::INFINITY;
            }
            sum += d * d;
        }
        sum.sqrt()
    }

    /// Euclidean projection of `z` onto the set.
    pub fn project(&self, z: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if z.len() != self.total_dim {
            return Err(Error::DimensionMismatch(format!(
                "point has dim {}, set has dim {}",
                z.len(),
                self.total_dim
            )));
        }
        let mut out = z.to_owned();
        self.project_in_place(out.view_mut());
        Ok(out)
    }

    /// In-place blockwise projection; the caller guarantees the length.
    pub(crate) fn project_in_place(&self, mut z: ArrayViewMut1<'_, f64>) {
        let mut offset = 0;
        for b in &self.blocks {
            let dim = b.dim();
            b.project(z.slice_mut(s![offset..offset + dim]));
            offset += dim;
        }
    }

    /// Row-wise projection of an aggregate state.
    pub fn project_aggregate(&self, z: &AggregateState) -> Result<AggregateState> {
        if z.cols() != self.total_dim {
            return Err(Error::DimensionMismatch(format!(
                "state has {} columns, set has dim {}",
                z.cols(),
                self.total_dim
            )));
        }
        let mut data = z.data().clone();
        for row in data.rows_mut() {
            self.project_in_place(row);
        }
        AggregateState::new(data)
    }

    /// Feasibility check with tolerance, blockwise.
    pub fn contains(&self, z: ArrayView1<'_, f64>, tol: f64) -> bool {
        if z.len() != self.total_dim {
            return false;
        }
        let mut offset = 0;
        for b in &self.blocks {
            let dim = b.dim();
            if !b.contains(z.slice(s![offset..offset + dim]), tol) {
                return false;
            }
            offset += dim;
        }
        true
    }
}
