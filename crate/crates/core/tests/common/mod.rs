//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub type Matrix = DMatrix<f64>;

/// Two isotropic Gaussian blobs of `per_blob` points each in the plane, unit σ, centers
/// `separation` apart. Returns features and labels (first blob 0).
pub fn two_blobs(per_blob: usize, separation: f64, seed: u64) -> (Matrix, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n = 2 * per_blob;
    let mut x = Matrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = usize::from(i >= per_blob);
        x[(i, 0)] = normal.sample(&mut rng) + c as f64 * separation;
        x[(i, 1)] = normal.sample(&mut rng);
        labels.push(c);
    }
    (x, labels)
}

pub fn random_psd(rng: &mut impl Rng, n: usize) -> Matrix {
    let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let k = &a * a.transpose() / n as f64;
    (&k + k.transpose()) * 0.5
}

pub fn write_csv(path: &Path, m: &Matrix) {
    let mut text = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

pub fn write_labels(path: &Path, labels: &[usize]) {
    let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
    fs::write(path, text).unwrap();
}

/// `½Tr(K − 2KZ + ZᵀKZ) + α‖K − ZᵀKZ‖²_F`, written entrywise.
pub fn smooth_part(k: &Matrix, z: &Matrix, alpha: f64) -> f64 {
    let n = k.nrows();
    let ztkz = z.transpose() * k * z;
    let mut tr = 0.0;
    for i in 0..n {
        let mut kz_ii = 0.0;
        for l in 0..n {
            kz_ii += k[(i, l)] * z[(l, i)];
        }
        tr += k[(i, i)] - 2.0 * kz_ii + ztkz[(i, i)];
    }
    let mut fro = 0.0;
    for i in 0..n {
        for j in 0..n {
            fro += (k[(i, j)] - ztkz[(i, j)]).powi(2);
        }
    }
    0.5 * tr + alpha * fro
}

/// Gradient of [`smooth_part`] for symmetric `K`, where `R = K − ZᵀKZ` is symmetric too:
/// `KZ − K − 4α·KZR`.
pub fn smooth_part_grad(k: &Matrix, z: &Matrix, alpha: f64) -> Matrix {
    let kz = k * z;
    let r = k - z.transpose() * &kz;
    &kz - k - &kz * r * (4.0 * alpha)
}

pub fn l1_objective(k: &Matrix, z: &Matrix, alpha: f64, beta: f64) -> f64 {
    smooth_part(k, z, alpha) + beta * z.iter().map(|v| v.abs()).sum::<f64>()
}

fn shrink(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Proximal gradient with backtracking on `f(Z) + β‖Z‖₁`, diagonal held at zero.
pub fn pgd_reference(k: &Matrix, alpha: f64, beta: f64, iters: usize) -> (Matrix, f64) {
    let n = k.nrows();
    let mut z = Matrix::zeros(n, n);
    let mut step = 1.0;
    for _ in 0..iters {
        let f = smooth_part(k, &z, alpha);
        let g = smooth_part_grad(k, &z, alpha);
        step *= 2.0;
        loop {
            let mut cand = Matrix::from_fn(n, n, |i, j| shrink(z[(i, j)] - step * g[(i, j)], step * beta));
            cand.fill_diagonal(0.0);
            let d = &cand - &z;
            let model = f + g.dot(&d) + d.norm_squared() / (2.0 * step);
            if smooth_part(k, &cand, alpha) <= model + 1e-15 || step < 1e-12 {
                z = cand;
                break;
            }
            step *= 0.5;
        }
    }
    let obj = l1_objective(k, &z, alpha, beta);
    (z, obj)
}

/// Best accuracy over all injective maps from predicted ids to true ids (ids < 3).
pub fn brute_force_accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let kp = pred.iter().max().map_or(0, |m| m + 1);
    let kt = truth.iter().max().map_or(0, |m| m + 1);
    let targets = kp.max(kt);
    let mut best = 0usize;
    let mut map = vec![0usize; kp];
    fn search(i: usize, map: &mut Vec<usize>, used: &mut Vec<bool>, pred: &[usize], truth: &[usize], best: &mut usize) {
        if i == map.len() {
            let hits = pred.iter().zip(truth).filter(|(p, t)| map[**p] == **t).count();
            *best = (*best).max(hits);
            return;
        }
        for t in 0..used.len() {
            if !used[t] {
                used[t] = true;
                map[i] = t;
                search(i + 1, map, used, pred, truth, best);
                used[t] = false;
            }
        }
    }
    let mut used = vec![false; targets];
    search(0, &mut map, &mut used, pred, truth, &mut best);
    best as f64 / pred.len() as f64
}

/// NMI = I(X;Y) / max(H(X), H(Y)) from raw counts; 1 when both partitions are trivial.
pub fn reference_nmi(pred: &[usize], truth: &[usize]) -> f64 {
    use std::collections::HashMap;
    let n = pred.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in pred.iter().zip(truth) {
        *joint.entry((a, b)).or_default() += 1.0;
        *pa.entry(a).or_default() += 1.0;
        *pb.entry(b).or_default() += 1.0;
    }
    let entropy = |m: &HashMap<usize, f64>| -m.values().map(|c| c / n * (c / n).ln()).sum::<f64>();
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| c / n * ((c * n) / (pa[&a] * pb[&b])).ln())
        .sum();
    mi / ha.max(hb)
}
