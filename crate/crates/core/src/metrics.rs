//! Clustering evaluation: Hungarian-matched accuracy and normalized mutual information.
//!
//! Labels may be arbitrary ids; both partitions are remapped to dense `0..k` internally.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::Matrix;

/// Joint counts of predicted cluster (rows) against true class (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Contingency {
    pub counts: Vec<Vec<usize>>,
    pub n: usize,
}

fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let ids: BTreeMap<usize, usize> = labels
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, l)| (l, i))
        .collect();
    (labels.iter().map(|l| ids[l]).collect(), ids.len())
}

impl Contingency {
    pub fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::shape(format!("{} labels", truth.len()), format!("{} predictions", pred.len())));
        }
        if pred.is_empty() {
            return Err(Error::Input("cannot evaluate empty partitions".into()));
        }
        let (p, kp) = dense_ids(pred);
        let (t, kt) = dense_ids(truth);
        let mut counts = vec![vec![0usize; kt]; kp];
        for (&a, &b) in p.iter().zip(&t) {
            counts[a][b] += 1;
        }
        Ok(Self { counts, n: pred.len() })
    }

    pub fn n_pred(&self) -> usize {
        self.counts.len()
    }

    pub fn n_true(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }
}

/// Result of a minimum-cost assignment on a (possibly rectangular) cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column matched to each row; `None` for surplus rows of a tall matrix.
    pub row_to_col: Vec<Option<usize>>,
    pub cost: f64,
}

/// Kuhn–Munkres minimum-cost assignment in `O(k³)`, `k = max(rows, cols)`.
///
/// Rectangular inputs are padded with zero-cost rows or columns to square.
pub fn hungarian(cost: &Matrix) -> Result<Assignment> {
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("assignment costs must be finite".into()));
    }
    let (rows, cols) = cost.shape();
    let k = rows.max(cols);
    if k == 0 {
        return Ok(Assignment {
            row_to_col: Vec::new(),
            cost: 0.0,
        });
    }
    let at = |i: usize, j: usize| if i < rows && j < cols { cost[(i, j)] } else { 0.0 };

    // Potentials formulation with 1-based sentinel column 0.
    let mut u = vec![0.0; k + 1];
    let mut v = vec![0.0; k + 1];
    let mut matched_row = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    for i in 1..=k {
        matched_row[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; k + 1];
        let mut used = vec![false; k + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=k {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=k {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![None; rows];
    let mut total = 0.0;
    for j in 1..=k {
        let i = matched_row[j] - 1;
        if i < rows && j - 1 < cols {
            row_to_col[i] = Some(j - 1);
            total += cost[(i, j - 1)];
        }
    }
    Ok(Assignment {
        row_to_col,
        cost: total,
    })
}

/// Fraction of samples whose cluster maps to their class under the best one-to-one mapping.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    let negated = Matrix::from_fn(table.n_pred(), table.n_true(), |i, j| -(table.counts[i][j] as f64));
    let assignment = hungarian(&negated)?;
    let matched: usize = assignment
        .row_to_col
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| table.counts[i][j]))
        .sum();
    Ok(matched as f64 / table.n as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `MI(pred, truth) / max(H(pred), H(truth))` with natural logarithms.
///
/// Two single-cluster partitions are identical and score 1.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let table = Contingency::new(pred, truth)?;
    let n = table.n as f64;
    let row_sums: Vec<usize> = table.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<usize> = (0..table.n_true())
        .map(|j| table.counts.iter().map(|r| r[j]).sum())
        .collect();
    let h_pred = entropy(row_sums.iter().copied(), n);
    let h_true = entropy(col_sums.iter().copied(), n);
    let denom = h_pred.max(h_true);
    if denom == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let pij = c as f64 / n;
                mi += pij * (pij * n * n / (row_sums[i] as f64 * col_sums[j] as f64)).ln();
            }
        }
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}
