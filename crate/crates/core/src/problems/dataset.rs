//! LIBSVM-format datasets and deterministic agent partitioning.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense feature matrix with +/-1 labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<f64>,
}

impl Dataset {
    pub fn from_parts(features: Array2<f64>, labels: Vec<f64>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if labels.iter().any(|l| *l != 1.0 && *l != -1.0) {
            return Err(Error::InvalidConstants("labels must be +1 or -1".into()));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConstants("non-finite feature value".into()));
        }
        Ok(Self { features, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// New dataset containing `indices` in order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Array2::zeros((indices.len(), self.dim()));
        let mut labels = Vec::with_capacity(indices.len());
        for (row, &idx) in indices.iter().enumerate() {
            if idx >= self.n_samples() {
                return Err(Error::IndexOutOfRange(format!(
                    "sample {idx} out of range for {} samples",
                    self.n_samples()
                )));
            }
            features.row_mut(row).assign(&self.features.row(idx));
            labels.push(self.labels[idx]);
        }
        Ok(Self { features, labels })
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|l| **l > 0.0).count()
    }
}

/// Parses a LIBSVM sparse text file: `label idx:val idx:val ...` with
/// 1-based indices. Labels are normalized to +/-1 (`0` maps to `-1`); the
/// feature dimension is the maximum index seen.
pub fn load_libsvm<P: AsRef<Path>>(path: P) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::ParseError {
        line: 0,
        msg: format!("cannot read {}: {e}", path.display()),
    })?;

    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a first token");
        let label_val: f64 = label_tok.parse().map_err(|_| Error::ParseError {
            line: lineno + 1,
            msg: format!("bad label {label_tok:?}"),
        })?;
        labels.push(if label_val > 0.0 { 1.0 } else { -1.0 });

        let mut row = Vec::new();
        for tok in tokens {
            let (idx_str, val_str) = tok.split_once(':').ok_or_else(|| Error::ParseError {
                line: lineno + 1,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = idx_str.parse().map_err(|_| Error::ParseError {
                line: lineno + 1,
                msg: format!("bad feature index {idx_str:?}"),
            })?;
            if idx == 0 {
                return Err(Error::ParseError {
                    line: lineno + 1,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let val: f64 = val_str.parse().map_err(|_| Error::ParseError {
                line: lineno + 1,
                msg: format!("bad feature value {val_str:?}"),
            })?;
            max_index = max_index.max(idx);
            row.push((idx - 1, val));
        }
        rows.push(row);
    }

    if rows.is_empty() {
        return Err(Error::EmptyFile(path.display().to_string()));
    }

    let mut features = Array2::zeros((rows.len(), max_index));
    for (r, row) in rows.iter().enumerate() {
        for &(c, v) in row {
            features[[r, c]] = v;
        }
    }
    Dataset::from_parts(features, labels)
}

/// Shuffles sample indices with `seed` and splits them into `m` contiguous
/// chunks of equal size `n = floor(N/m)`; surplus samples are dropped so
/// every agent holds the same component count.
pub fn partition(dataset: &Dataset, m: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n_samples = dataset.n_samples();
    if m == 0 {
        return Err(Error::InvalidSize("m must be at least 1".into()));
    }
    if n_samples < m {
        return Err(Error::TooFewSamples(format!(
            "{n_samples} samples cannot cover {m} agents"
        )));
    }
    let per_agent = n_samples / m;
    let mut indices: Vec<usize> = (0..n_samples).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    Ok(indices
        .chunks_exact(per_agent)
        .take(m)
        .map(|chunk| chunk.to_vec())
        .collect())
}
