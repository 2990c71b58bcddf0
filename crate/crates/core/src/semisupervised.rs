//! Local/global consistency label propagation on the learned graph.
//!
//! Minimizing `Tr(FᵀLF + γ(F − Y)ᵀ(F − Y))` gives `(L + γI)F = γY`, solved in the
//! equivalent form `(I + L/γ)F = Y`.

use nalgebra::Cholesky;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, laplacian, restart_rng};
use crate::Matrix;

/// One-hot rows for labeled samples, zero rows otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    values: Matrix,
    labeled: Vec<bool>,
}

impl LabelMatrix {
    /// `labels[i]` is only read where `labeled[i]` holds.
    pub fn new(labels: &[usize], labeled: &[bool], classes: usize) -> Result<Self> {
        if labels.len() != labeled.len() {
            return Err(Error::shape(format!("{} mask entries", labels.len()), labeled.len()));
        }
        let mut values = Matrix::zeros(labels.len(), classes);
        for (i, (&l, &known)) in labels.iter().zip(labeled).enumerate() {
            if known {
                if l >= classes {
                    return Err(Error::Input(format!("label {l} of sample {i} is not below {classes}")));
                }
                values[(i, l)] = 1.0;
            }
        }
        Ok(Self {
            values,
            labeled: labeled.to_vec(),
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn labeled_mask(&self) -> &[bool] {
        &self.labeled
    }
}

#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub scores: Matrix,
    /// Row argmax of `scores`, lowest class id on ties.
    pub predictions: Vec<usize>,
}

fn row_argmax(m: &Matrix) -> Vec<usize> {
    m.row_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect()
}

/// Factorization of `I + L/γ`, reusable across label matrices.
pub struct LgcSystem {
    chol: Cholesky<f64, nalgebra::Dyn>,
    n: usize,
}

impl LgcSystem {
    pub fn new(l: &Matrix, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {gamma}")));
        }
        if !l.is_square() {
            return Err(Error::shape("square Laplacian", format!("{}x{}", l.nrows(), l.ncols())));
        }
        let n = l.nrows();
        let chol = Cholesky::new(l / gamma + Matrix::identity(n, n)).ok_or_else(|| Error::Conditioning {
            system: "label propagation (I + L/γ)",
            detail: "Cholesky factorization failed; L must be positive semidefinite".into(),
        })?;
        Ok(Self { chol, n })
    }

    pub fn propagate(&self, y: &LabelMatrix) -> Result<PropagationResult> {
        if y.values.nrows() != self.n {
            return Err(Error::shape(format!("{} label rows", self.n), y.values.nrows()));
        }
        let scores = self.chol.solve(&y.values);
        let predictions = row_argmax(&scores);
        Ok(PropagationResult { scores, predictions })
    }
}

/// `F = γ(L + γI)⁻¹Y`, predictions by row argmax.
pub fn lgc_propagate(l: &Matrix, y: &LabelMatrix, gamma: f64) -> Result<PropagationResult> {
    LgcSystem::new(l, gamma)?.propagate(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SslSummary {
    pub fraction: f64,
    pub mean_acc: f64,
    /// Sample standard deviation (n − 1); 0 for a single repeat.
    pub std_acc: f64,
    pub per_repeat: Vec<f64>,
}

/// Number of labeled samples drawn from a class of `size`: `⌈fraction·size⌉`, at least 1.
pub fn labeled_count(size: usize, fraction: f64) -> usize {
    // guard against 0.3·10 = 3.0000000000000004
    let raw = (fraction * size as f64 - 1e-9).ceil().max(1.0) as usize;
    raw.min(size)
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Stratified labeled-fraction protocol: per repeat, label `⌈fraction·|class|⌉` random
/// samples of every class, propagate on the Laplacian of `Z`, and score accuracy on the
/// unlabeled samples. Repeat `r` draws from ChaCha stream `r` of `seed`.
pub fn ssl_experiment(
    z: &Matrix,
    labels: &[usize],
    fraction: f64,
    repeats: usize,
    gamma: f64,
    seed: u64,
) -> Result<SslSummary> {
    let l = laplacian(&build_graph(z)?);
    ssl_on_laplacian(&l, labels, fraction, repeats, gamma, seed)
}

pub fn ssl_on_laplacian(
    l: &Matrix,
    labels: &[usize],
    fraction: f64,
    repeats: usize,
    gamma: f64,
    seed: u64,
) -> Result<SslSummary> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Config(format!("labeled fraction must be in (0, 1], got {fraction}")));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    if labels.len() != l.nrows() {
        return Err(Error::shape(format!("{} labels", l.nrows()), labels.len()));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    if let Some(empty) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyClass(empty));
    }
    let labeled_total: usize = members.iter().map(|m| labeled_count(m.len(), fraction)).sum();
    if labeled_total == labels.len() {
        return Err(Error::EmptyEvaluation);
    }

    let system = LgcSystem::new(l, gamma)?;
    let per_repeat: Vec<f64> = (0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = restart_rng(seed, r);
            let mut mask = vec![false; labels.len()];
            for class in &members {
                let mut pool = class.clone();
                pool.shuffle(&mut rng);
                for &i in &pool[..labeled_count(class.len(), fraction)] {
                    mask[i] = true;
                }
            }
            let y = LabelMatrix::new(labels, &mask, classes)?;
            let result = system.propagate(&y)?;
            let (hits, total) = mask
                .iter()
                .zip(result.predictions.iter().zip(labels))
                .filter(|(known, _)| !**known)
                .fold((0usize, 0usize), |(h, t), (_, (p, truth))| (h + usize::from(p == truth), t + 1));
            Ok(hits as f64 / total as f64)
        })
        .collect::<Result<_>>()?;

    let (mean_acc, std_acc) = mean_and_std(&per_repeat);
    Ok(SslSummary {
        fraction,
        mean_acc,
        std_acc,
        per_repeat,
    })
}
