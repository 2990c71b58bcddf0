//! Spectral clustering on a learned coefficient matrix.
//!
//! `Z` is generally asymmetric and signed, so the graph uses `S = (|Z| + |Zᵀ|)/2` and the
//! unnormalized Laplacian `L = diag(S·1) − S`. The embedding `F` minimizes `Tr(FᵀLF)` subject
//! to `FᵀF = I`, i.e. the eigenvectors of the `c` smallest eigenvalues. Rows of `F` are then
//! grouped by k-means (k-means++ seeding, best of several restarts). Rows of `F` are not
//! renormalized before k-means.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_MAX_LLOYD_ITER: usize = 300;
pub const DEFAULT_CENTER_TOL: f64 = 1e-6;

/// Symmetric nonnegative weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    pub weights: Matrix,
    pub degree: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    /// `n × c`, columns are orthonormal eigenvectors.
    pub vectors: Matrix,
    /// Nondecreasing.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub seed: u64,
}

/// `S = (|Z| + |Zᵀ|)/2` with zero diagonal, plus row sums.
pub fn build_graph(z: &Matrix) -> Result<SimilarityGraph> {
    if !z.is_square() {
        return Err(Error::shape("square coefficient matrix", format!("{}x{}", z.nrows(), z.ncols())));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("coefficient matrix has non-finite entries".into()));
    }
    let n = z.nrows();
    let mut weights = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (z[(i, j)].abs() + z[(j, i)].abs());
            weights[(i, j)] = s;
            weights[(j, i)] = s;
        }
    }
    let degree = weights.row_iter().map(|r| r.sum()).collect();
    Ok(SimilarityGraph { weights, degree })
}

/// `L = diag(degree) − S`.
pub fn laplacian(graph: &SimilarityGraph) -> Matrix {
    let mut l = -&graph.weights;
    for (i, d) in graph.degree.iter().enumerate() {
        l[(i, i)] = *d;
    }
    l
}

/// Eigenvectors of the `c` smallest eigenvalues of a symmetric `L`.
pub fn spectral_embed(l: &Matrix, c: usize) -> Result<SpectralEmbedding> {
    let n = l.nrows();
    if !l.is_square() {
        return Err(Error::shape("square Laplacian", format!("{}x{}", n, l.ncols())));
    }
    if c == 0 || c > n {
        return Err(Error::Input(format!("embedding dimension must be in 1..={n}, got {c}")));
    }
    let eig = SymmetricEigen::try_new(l.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("symmetric eigendecomposition did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let chosen = &order[..c];
    let vectors = Matrix::from_fn(n, c, |i, k| eig.eigenvectors[(i, chosen[k])]);
    let eigenvalues = chosen.iter().map(|&k| eig.eigenvalues[k]).collect();
    Ok(SpectralEmbedding { vectors, eigenvalues })
}

/// Single Lloyd run: final assignments, inertia, and the inertia after every assignment step.
#[derive(Debug, Clone)]
pub(crate) struct LloydRun {
    pub assignments: Vec<usize>,
    pub inertia: f64,
    #[cfg_attr(not(test), allow(dead_code))]
    pub trace: Vec<f64>,
}

fn sq_dist(points: &Matrix, i: usize, centers: &Matrix, k: usize) -> f64 {
    points
        .row(i)
        .iter()
        .zip(centers.row(k).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_seeds(points: &Matrix, c: usize, rng: &mut impl Rng) -> Matrix {
    let n = points.nrows();
    let mut centers = Matrix::zeros(c, points.ncols());
    let first = rng.random_range(0..n);
    centers.set_row(0, &points.row(first));
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers, 0)).collect();
    for k in 1..c {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // rounding can run past the end; take the last point with positive weight
            if nearest[chosen] == 0.0 {
                chosen = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.set_row(k, &points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &centers, k));
        }
    }
    centers
}

fn assign(points: &Matrix, centers: &Matrix, labels: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let (best, d) = (0..centers.nrows())
            .map(|k| (k, sq_dist(points, i, centers, k)))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        *label = best;
        inertia += d;
    }
    inertia
}

pub(crate) fn lloyd(points: &Matrix, c: usize, rng: &mut impl Rng, max_iter: usize, tol: f64) -> LloydRun {
    let (n, dim) = points.shape();
    let mut centers = plus_plus_seeds(points, c, rng);
    let mut labels = vec![0usize; n];
    let mut trace: Vec<f64> = Vec::new();
    for _ in 0..max_iter {
        let inertia = assign(points, &centers, &mut labels);
        debug_assert!(trace.last().is_none_or(|&prev| inertia <= prev + 1e-9 * prev.max(1.0)));
        trace.push(inertia);
        let mut sums = Matrix::zeros(c, dim);
        let mut counts = vec![0usize; c];
        for (i, &l) in labels.iter().enumerate() {
            let mut row = sums.row_mut(l);
            row += points.row(i);
            counts[l] += 1;
        }
        let mut movement = 0.0_f64;
        for k in 0..c {
            // empty clusters keep their center
            if counts[k] > 0 {
                let new_center = sums.row(k) / counts[k] as f64;
                movement = movement.max((&new_center - centers.row(k)).norm());
                centers.set_row(k, &new_center);
            }
        }
        if movement <= tol {
            break;
        }
    }
    let inertia = assign(points, &centers, &mut labels);
    trace.push(inertia);
    LloydRun {
        assignments: labels,
        inertia,
        trace,
    }
}

/// Restart `r` uses the ChaCha stream `r` of the master seed.
pub(crate) fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// k-means on the rows of `points`; keeps the restart with the lowest inertia
/// (earliest restart on ties).
pub fn kmeans_points(points: &Matrix, c: usize, seed: u64, restarts: usize) -> Result<ClusteringResult> {
    let n = points.nrows();
    if c == 0 {
        return Err(Error::Input("number of clusters must be at least 1".into()));
    }
    if c > n {
        return Err(Error::Input(format!("cannot form {c} clusters from {n} points")));
    }
    if restarts == 0 {
        return Err(Error::Input("restarts must be at least 1".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("k-means input has non-finite entries".into()));
    }
    let runs: Vec<LloydRun> = (0..restarts)
        .into_par_iter()
        .map(|r| lloyd(points, c, &mut restart_rng(seed, r), DEFAULT_MAX_LLOYD_ITER, DEFAULT_CENTER_TOL))
        .collect();
    let best = runs
        .into_iter()
        .reduce(|best, run| if run.inertia < best.inertia { run } else { best })
        .expect("restarts >= 1");
    Ok(ClusteringResult {
        assignments: best.assignments,
        inertia: best.inertia,
        seed,
    })
}

/// k-means on the embedding rows.
pub fn kmeans(embedding: &SpectralEmbedding, c: usize, seed: u64, restarts: usize) -> Result<ClusteringResult> {
    kmeans_points(&embedding.vectors, c, seed, restarts)
}

/// Graph → Laplacian → `c`-dimensional embedding → k-means with 20 restarts.
pub fn cluster(z: &Matrix, c: usize, seed: u64) -> Result<ClusteringResult> {
    let graph = build_graph(z)?;
    let l = laplacian(&graph);
    let embedding = spectral_embed(&l, c)?;
    kmeans(&embedding, c, seed, DEFAULT_RESTARTS)
}
