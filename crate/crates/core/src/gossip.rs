//! Gossip matrices and accelerated consensus averaging.
//!
//! A gossip matrix `W` is symmetric, doubly stochastic and positive
//! semidefinite, with sparsity matching the communication graph. Weights
//! follow the lazy Metropolis rule `W[i][j] = 1/(2 max(deg_i, deg_j))` on
//! edges, which is diagonally dominant and therefore PSD for any connected
//! undirected graph; the complete graph uses uniform weights `1/m` so a
//! single multiplication averages exactly.
//!
//! [`fast_mix`] runs the two-register accelerated consensus recursion
//! `z_{k+1} = (1 + eta_u) W z_k - eta_u z_{k-1}` with the stationary
//! parameter `eta_u = (1 - sqrt(1 - lambda2^2)) / (1 + sqrt(1 - lambda2^2))`.
//! It preserves the row mean exactly and contracts the consensus error at
//! an accelerated rate governed by `sqrt(chi)`, `chi = 1/(1 - lambda2)`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Supported communication graphs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyKind {
    Complete,
    Ring,
    Path,
    /// Erdos-Renyi graph, resampled until connected.
    RandomGnp { prob: f64, seed: u64 },
    /// User-supplied matrix via [`GossipTopology::from_matrix`].
    Custom,
}

impl std::fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TopologyKind::Complete => write!(f, "complete"),
            TopologyKind::Ring => write!(f, "ring"),
            TopologyKind::Path => write!(f, "path"),
            TopologyKind::RandomGnp { .. } => write!(f, "random_gnp"),
            TopologyKind::Custom => write!(f, "custom"),
        }
    }
}

/// A gossip matrix together with its spectral metadata.
#[derive(Debug, Clone)]
pub struct GossipTopology {
    kind: TopologyKind,
    m: usize,
    w: Array2<f64>,
    /// Eigenvalues of `w`, sorted in descending order.
    eigenvalues: Vec<f64>,
    lambda2: f64,
    chi: f64,
}

const GNP_MAX_ATTEMPTS: usize = 200;

/// Builds the gossip matrix for `kind` on `m` agents.
pub fn build_topology(kind: TopologyKind, m: usize) -> Result<GossipTopology> {
    if m == 0 {
        return Err(Error::InvalidSize("m must be at least 1".into()));
    }
    let adjacency = match kind {
        TopologyKind::Complete => complete_adjacency(m),
        TopologyKind::Ring => ring_adjacency(m),
        TopologyKind::Path => path_adjacency(m),
        TopologyKind::RandomGnp { prob, seed } => {
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::InvalidSize(format!(
                    "edge probability {prob} outside [0, 1]"
                )));
            }
            sample_connected_gnp(m, prob, seed)?
        }
        TopologyKind::Custom => {
            return Err(Error::InvalidSize(
                "custom topologies are built with GossipTopology::from_matrix".into(),
            ))
        }
    };

    let mut w = match kind {
        // Uniform weights average the complete graph in one step.
        TopologyKind::Complete => Array2::from_elem((m, m), 1.0 / m as f64),
        _ => lazy_metropolis(&adjacency),
    };

    let mut eigenvalues = symmetric_eigenvalues(&w);
    if m > 1 && eigenvalues[m - 1] < -1e-10 {
        // Lazy Metropolis weights are already PSD; this shift only fires for
        // future constructions that are not.
        let identity = Array2::<f64>::eye(m);
        w = (&w + &identity) * 0.5;
        eigenvalues = symmetric_eigenvalues(&w);
    }

    let lambda2 = if m == 1 { 0.0 } else { eigenvalues[1] };
    if lambda2 >= 1.0 - 1e-9 {
        return Err(Error::DisconnectedGraph {
            attempts: GNP_MAX_ATTEMPTS,
        });
    }
    Ok(GossipTopology {
        kind,
        m,
        w,
        eigenvalues,
        lambda2,
        chi: 1.0 / (1.0 - lambda2),
    })
}

impl GossipTopology {
    /// Wraps a user-supplied gossip matrix, validating symmetry, row sums
    /// and the spectral requirements (PSD, `lambda2 < 1`).
    pub fn from_matrix(w: Array2<f64>) -> Result<Self> {
        let m = w.nrows();
        if m == 0 || w.ncols() != m {
            return Err(Error::InvalidSize(format!(
                "gossip matrix must be square and nonempty, got {}x{}",
                m,
                w.ncols()
            )));
        }
        for i in 0..m {
            let row_sum: f64 = (0..m).map(|j| w[[i, j]]).sum();
            if (row_sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidConstants(format!("row {i} sums to {row_sum}")));
            }
            for j in 0..i {
                if (w[[i, j]] - w[[j, i]]).abs() > 1e-12 {
                    return Err(Error::InvalidConstants(format!(
                        "matrix is not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        let eigenvalues = symmetric_eigenvalues(&w);
        if *eigenvalues.last().unwrap() < -1e-10 {
            return Err(Error::InvalidConstants("matrix is not PSD".into()));
        }
        let lambda2 = if m == 1 { 0.0 } else { eigenvalues[1] };
        if lambda2 >= 1.0 - 1e-9 {
            return Err(Error::DisconnectedGraph { attempts: 0 });
        }
        Ok(Self {
            kind: TopologyKind::Custom,
            m,
            w,
            eigenvalues,
            lambda2,
            chi: 1.0 / (1.0 - lambda2),
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    /// Number of agents.
    pub fn size(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.w
    }

    /// Second largest eigenvalue of the gossip matrix (0 for a single agent).
    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Condition quantity `chi = 1/(1 - lambda2)`.
    pub fn chi(&self) -> f64 {
        self.chi
    }

    /// Full spectrum of `W` in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Structured one-line description, e.g. `{kind=random_gnp, m=10, prob=0.5, seed=1}`.
    pub fn describe(&self) -> String {
        match self.kind {
            TopologyKind::RandomGnp { prob, seed } => {
                format!("{{kind={}, m={}, prob={}, seed={}}}", self.kind, self.m, prob, seed)
            }
            _ => format!("{{kind={}, m={}}}", self.kind, self.m),
        }
    }

    /// Dumps `W` as CSV rows for inspection.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.m {
            let row: Vec<String> = (0..self.m)
                .map(|j| format!("{:.16e}", self.w[[i, j]]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn complete_adjacency(m: usize) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m {
        for j in 0..m {
            adj[i][j] = i != j;
        }
    }
    adj
}

fn ring_adjacency(m: usize) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; m]; m];
    if m > 1 {
        for i in 0..m {
            let j = (i + 1) % m;
            adj[i][j] = true;
            adj[j][i] = true;
        }
    }
    adj
}

fn path_adjacency(m: usize) -> Vec<Vec<bool>> {
    let mut adj = vec![vec![false; m]; m];
    for i in 0..m.saturating_sub(1) {
        adj[i][i + 1] = true;
        adj[i + 1][i] = true;
    }
    adj
}

fn sample_connected_gnp(m: usize, prob: f64, seed: u64) -> Result<Vec<Vec<bool>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..GNP_MAX_ATTEMPTS {
        let mut adj = vec![vec![false; m]; m];
        for i in 0..m {
            for j in (i + 1)..m {
                if rng.random::<f64>() < prob {
                    adj[i][j] = true;
                    adj[j][i] = true;
                }
            }
        }
        if is_connected(&adj) {
            return Ok(adj);
        }
    }
    Err(Error::DisconnectedGraph {
        attempts: GNP_MAX_ATTEMPTS,
    })
}

fn is_connected(adj: &[Vec<bool>]) -> bool {
    let m = adj.len();
    let mut seen = vec![false; m];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for v in 0..m {
            if adj[u][v] && !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    count == m
}

/// Lazy Metropolis weighting: `1/(2 max(deg_i, deg_j))` on edges, rest on
/// the diagonal. Symmetric, doubly stochastic and diagonally dominant.
fn lazy_metropolis(adj: &[Vec<bool>]) -> Array2<f64> {
    let m = adj.len();
    let deg: Vec<usize> = adj.iter().map(|row| row.iter().filter(|&&e| e).count()).collect();
    let mut w = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            if adj[i][j] {
                let weight = 1.0 / (2.0 * deg[i].max(deg[j]) as f64);
                w[[i, j]] = weight;
                w[[j, i]] = weight;
            }
        }
    }
    for i in 0..m {
        let off: f64 = (0..m).filter(|&j| j != i).map(|j| w[[i, j]]).sum();
        w[[i, i]] = 1.0 - off;
    }
    w
}

fn symmetric_eigenvalues(w: &Array2<f64>) -> Vec<f64> {
    let m = w.nrows();
    let mat = nalgebra::DMatrix::from_row_slice(m, m, w.as_slice().expect("contiguous"));
    let mut ev: Vec<f64> = mat.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    ev
}

/// Stacked per-agent variables: row `i` holds agent `i`'s local copy.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateState {
    data: Array2<f64>,
}

impl AggregateState {
    /// Wraps an `m x d` matrix, rejecting non-finite entries.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::DimensionMismatch(
                "aggregate state contains non-finite entries".into(),
            ));
        }
        Ok(Self { data })
    }

    /// All agents start from the same local copy.
    pub fn replicate_row(m: usize, row: ArrayView1<'_, f64>) -> Self {
        let mut data = Array2::zeros((m, row.len()));
        for mut r in data.rows_mut() {
            r.assign(&row);
        }
        Self { data }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// Arithmetic mean of the rows, `(1/m) 1^T Z`.
    pub fn mean_row(&self) -> Array1<f64> {
        self.data.mean_axis(Axis(0)).expect("at least one row")
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }
}

/// Runs `k` rounds of accelerated consensus on `z0`.
///
/// `k = 0` returns the input unchanged; each applied recursion counts as one
/// communication round. The row mean of the output equals the row mean of
/// the input.
pub fn fast_mix(z0: &AggregateState, topology: &GossipTopology, k: u32) -> Result<AggregateState> {
    if z0.rows() != topology.size() {
        return Err(Error::DimensionMismatch(format!(
            "state has {} rows but topology has {} agents",
            z0.rows(),
            topology.size()
        )));
    }
    Ok(AggregateState {
        data: fast_mix_mat(z0.data(), topology, k),
    })
}

/// Matrix-level fast mix used by the solvers.
pub(crate) fn fast_mix_mat(z0: &Array2<f64>, topology: &GossipTopology, k: u32) -> Array2<f64> {
    if k == 0 || topology.size() == 1 {
        return z0.clone();
    }
    let lambda2 = topology.lambda2();
    let root = (1.0 - lambda2 * lambda2).sqrt();
    let eta_u = (1.0 - root) / (1.0 + root);
    let w = topology.matrix();
    let mut prev = z0.clone();
    let mut cur = z0.clone();
    for _ in 0..k {
        let mut next = w.dot(&cur);
        next *= 1.0 + eta_u;
        next.scaled_add(-eta_u, &prev);
        prev = std::mem::replace(&mut cur, next);
    }
    cur
}

/// Number of mixing rounds needed for a `log_argument` accuracy target:
/// `ceil(sqrt(chi) * ln(log_argument))`, at least 1.
///
/// This is the shape shared by every consensus-round schedule `K`/`K0`.
pub fn mixing_rounds_for_target(topology: &GossipTopology, log_argument: f64) -> u32 {
    let arg = log_argument.max(1.0);
    let rounds = (topology.chi().sqrt() * arg.ln()).ceil();
    (rounds.max(1.0)) as u32
}
