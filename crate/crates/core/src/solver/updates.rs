//! Closed-form ADMM subproblem solutions.
//!
//! Each of `J`, `W`, `H` minimizes a strongly convex quadratic; setting the gradient to zero
//! gives a linear system with a symmetric positive-definite left-hand side, solved here by
//! Cholesky factorization.

use nalgebra::Cholesky;

use super::prox::{prox_l1, prox_nuclear};
use super::{Regularizer, SolverState};
use crate::error::{Error, Result};
use crate::Matrix;

fn spd_solve(mut lhs: Matrix, rhs: &Matrix, system: &'static str) -> Result<Matrix> {
    lhs = (&lhs + lhs.transpose()) * 0.5;
    let chol = Cholesky::new(lhs).ok_or_else(|| Error::Conditioning {
        system,
        detail: "Cholesky factorization failed".into(),
    })?;
    Ok(chol.solve(rhs))
}

fn check_square(name: &str, m: &Matrix, n: usize) -> Result<()> {
    if m.shape() != (n, n) {
        return Err(Error::shape(
            format!("{name}: {n}x{n}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

/// Factorization of `K + μI`, constant across iterations.
#[derive(Debug, Clone)]
pub struct JSystem {
    chol: Cholesky<f64, nalgebra::Dyn>,
    k: Matrix,
    mu: f64,
}

impl JSystem {
    pub fn new(k: &Matrix, mu: f64) -> Result<Self> {
        let n = k.nrows();
        check_square("K", k, n)?;
        let lhs = k + Matrix::identity(n, n) * mu;
        let chol = Cholesky::new(lhs).ok_or_else(|| Error::Conditioning {
            system: "J update (K + μI)",
            detail: format!("K + {mu}·I is not positive definite; increase μ beyond −λ_min(K)"),
        })?;
        Ok(Self { chol, k: k.clone(), mu })
    }

    /// `J = (K + μI)⁻¹(K + μZ − Y₁)`.
    pub fn solve(&self, z: &Matrix, y1: &Matrix) -> Matrix {
        let rhs = &self.k + z * self.mu - y1;
        self.chol.solve(&rhs)
    }
}

/// `J = (K + μI)⁻¹(K + μZ − Y₁)`.
pub fn update_j(k: &Matrix, z: &Matrix, y1: &Matrix, mu: f64) -> Result<Matrix> {
    let n = k.nrows();
    check_square("Z", z, n)?;
    check_square("Y1", y1, n)?;
    Ok(JSystem::new(k, mu)?.solve(z, y1))
}

/// `W = (2α·KHHᵀKᵀ + μI)⁻¹(2α·KHKᵀ + μZ − Y₂)`.
pub fn update_w(k: &Matrix, h: &Matrix, z: &Matrix, y2: &Matrix, mu: f64, alpha: f64) -> Result<Matrix> {
    let n = k.nrows();
    for (name, m) in [("K", k), ("H", h), ("Z", z), ("Y2", y2)] {
        check_square(name, m, n)?;
    }
    let kh = k * h;
    let k_t = k.transpose();
    let lhs = &kh * kh.transpose() * (2.0 * alpha) + Matrix::identity(n, n) * mu;
    let rhs = &kh * &k_t * (2.0 * alpha) + z * mu - y2;
    spd_solve(lhs, &rhs, "W update")
}

/// `H = (2α·KᵀWWᵀK + μI)⁻¹(2α·KᵀWK + μZ − Y₃)`.
pub fn update_h(k: &Matrix, w: &Matrix, z: &Matrix, y3: &Matrix, mu: f64, alpha: f64) -> Result<Matrix> {
    let n = k.nrows();
    for (name, m) in [("K", k), ("W", w), ("Z", z), ("Y3", y3)] {
        check_square(name, m, n)?;
    }
    let ktw = k.transpose() * w;
    let lhs = &ktw * ktw.transpose() * (2.0 * alpha) + Matrix::identity(n, n) * mu;
    let rhs = &ktw * k * (2.0 * alpha) + z * mu - y3;
    spd_solve(lhs, &rhs, "H update")
}

/// Averages the three splitting copies with their scaled multipliers, applies the
/// regularizer's prox with threshold `β/(3μ)` and zeroes the diagonal.
#[allow(clippy::too_many_arguments)]
pub fn update_z(
    j: &Matrix,
    w: &Matrix,
    h: &Matrix,
    y1: &Matrix,
    y2: &Matrix,
    y3: &Matrix,
    mu: f64,
    beta: f64,
    regularizer: Regularizer,
) -> Result<Matrix> {
    let n = j.nrows();
    for (name, m) in [("J", j), ("W", w), ("H", h), ("Y1", y1), ("Y2", y2), ("Y3", y3)] {
        check_square(name, m, n)?;
    }
    let d = (j + w + h + (y1 + y2 + y3) / mu) / 3.0;
    let tau = beta / (3.0 * mu);
    let mut z = match regularizer {
        Regularizer::LowRank => prox_nuclear(&d, tau)?,
        Regularizer::Sparse => prox_l1(&d, tau)?,
    };
    z.fill_diagonal(0.0);
    Ok(z)
}

/// `Y₁ += μ(J − Z)`, `Y₂ += μ(W − Z)`, `Y₃ += μ(H − Z)`.
pub fn update_multipliers(state: &mut SolverState, mu: f64) {
    state.y1 += (&state.j - &state.z) * mu;
    state.y2 += (&state.w - &state.z) * mu;
    state.y3 += (&state.h - &state.z) * mu;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::test_util::{random_matrix, random_psd};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye(n: usize) -> Matrix {
        Matrix::identity(n, n)
    }

    fn zeros(n: usize) -> Matrix {
        Matrix::zeros(n, n)
    }

    #[test]
    fn j_identity_kernel() {
        let j = update_j(&eye(2), &zeros(2), &zeros(2), 1.0).unwrap();
        assert!((j - eye(2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn j_approaches_z_as_mu_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = random_psd(&mut rng, 5);
        let z = random_matrix(&mut rng, 5);
        let mut last = f64::INFINITY;
        for mu in [1.0, 10.0, 100.0, 1000.0] {
            let gap = (update_j(&k, &z, &zeros(5), mu).unwrap() - &z).norm();
            assert!(gap < last);
            last = gap;
        }
    }

    #[test]
    fn j_plug_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = random_psd(&mut rng, 5);
        let z = random_matrix(&mut rng, 5);
        let y1 = random_matrix(&mut rng, 5);
        let mu = 0.7;
        let j = update_j(&k, &z, &y1, mu).unwrap();
        let residual = (&k + eye(5) * mu) * &j - (&k + &z * mu - &y1);
        assert!(residual.norm() <= 1e-10);
    }

    #[test]
    fn j_rejects_indefinite_system() {
        let k = -eye(3) * 2.0;
        assert!(matches!(
            update_j(&k, &zeros(3), &zeros(3), 1.0),
            Err(Error::Conditioning { .. })
        ));
    }

    #[test]
    fn w_identity_case() {
        let w = update_w(&eye(2), &eye(2), &zeros(2), &zeros(2), 1.0, 0.5).unwrap();
        assert!((w - eye(2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn w_and_h_collapse_without_similarity_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = random_psd(&mut rng, 4);
        let other = random_matrix(&mut rng, 4);
        let z = random_matrix(&mut rng, 4);
        let y = random_matrix(&mut rng, 4);
        let mu = 2.0;
        let expected = &z - &y / mu;
        let w = update_w(&k, &other, &z, &y, mu, 0.0).unwrap();
        let h = update_h(&k, &other, &z, &y, mu, 0.0).unwrap();
        assert!((w - &expected).amax() < 1e-14);
        assert!((h - &expected).amax() < 1e-14);
    }

    #[test]
    fn h_identity_case() {
        let h = update_h(&eye(2), &eye(2), &zeros(2), &zeros(2), 1.0, 0.5).unwrap();
        assert!((h - eye(2) * 0.5).amax() < 1e-15);
    }

    #[test]
    fn w_and_h_plug_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let k = random_psd(&mut rng, 5);
            let h = random_matrix(&mut rng, 5);
            let w0 = random_matrix(&mut rng, 5);
            let z = random_matrix(&mut rng, 5);
            let y = random_matrix(&mut rng, 5);
            let (mu, alpha) = (1.3, 0.4);

            let w = update_w(&k, &h, &z, &y, mu, alpha).unwrap();
            let kh = &k * &h;
            let lhs = (&kh * kh.transpose() * (2.0 * alpha) + eye(5) * mu) * &w;
            let rhs = &kh * k.transpose() * (2.0 * alpha) + &z * mu - &y;
            assert!((lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0));

            let hh = update_h(&k, &w0, &z, &y, mu, alpha).unwrap();
            let ktw = k.transpose() * &w0;
            let lhs = (&ktw * ktw.transpose() * (2.0 * alpha) + eye(5) * mu) * &hh;
            let rhs = &ktw * &k * (2.0 * alpha) + &z * mu - &y;
            assert!((lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0));
        }
    }

    #[test]
    fn z_update_averaging_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d0 = random_matrix(&mut rng, 4);
        let (mu, beta) = (1.0, 0.3);
        for reg in [Regularizer::Sparse, Regularizer::LowRank] {
            let z = update_z(&d0, &d0, &d0, &zeros(4), &zeros(4), &zeros(4), mu, beta, reg).unwrap();
            let mut expected = match reg {
                Regularizer::Sparse => prox_l1(&d0, beta / 3.0).unwrap(),
                Regularizer::LowRank => prox_nuclear(&d0, beta / 3.0).unwrap(),
            };
            expected.fill_diagonal(0.0);
            assert!((z - expected).amax() < 1e-12);
        }
    }

    #[test]
    fn z_update_full_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d0 = random_matrix(&mut rng, 4);
        // τ = β/(3μ) = 100 dominates both max|D| and σ_max
        for reg in [Regularizer::Sparse, Regularizer::LowRank] {
            let z = update_z(&d0, &d0, &d0, &zeros(4), &zeros(4), &zeros(4), 1.0, 300.0, reg).unwrap();
            assert_eq!(z.amax(), 0.0);
        }
    }

    #[test]
    fn sparse_z_update_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (j, w, h) = (random_matrix(&mut rng, 4), random_matrix(&mut rng, 4), random_matrix(&mut rng, 4));
        let (y1, y2, y3) = (random_matrix(&mut rng, 4), random_matrix(&mut rng, 4), random_matrix(&mut rng, 4));
        let (mu, beta) = (1.5, 0.9);
        let z = update_z(&j, &w, &h, &y1, &y2, &y3, mu, beta, Regularizer::Sparse).unwrap();
        let d = (&j + &w + &h + (&y1 + &y2 + &y3) / mu) / 3.0;
        // brute-force scalar minimization of β|z| + (3μ/2)(z − d)² on a 1e−5 grid
        for r in 0..4 {
            for c in 0..4 {
                if r == c {
                    assert_eq!(z[(r, c)], 0.0);
                    continue;
                }
                let target = d[(r, c)];
                let objective = |v: f64| beta * v.abs() + 1.5 * mu * (v - target).powi(2);
                let best = (-300_000..=300_000)
                    .map(|s| s as f64 * 1e-5)
                    .min_by(|a, b| objective(*a).total_cmp(&objective(*b)))
                    .unwrap();
                assert!((z[(r, c)] - best).abs() <= 1e-4, "entry ({r},{c}): {} vs {best}", z[(r, c)]);
            }
        }
    }

    fn state(n: usize) -> SolverState {
        SolverState::zeros(n)
    }

    #[test]
    fn multipliers_unchanged_at_consensus() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = state(3);
        let m = random_matrix(&mut rng, 3);
        s.j = m.clone();
        s.w = m.clone();
        s.h = m.clone();
        s.z = m;
        s.y1 = random_matrix(&mut rng, 3);
        let before = s.y1.clone();
        update_multipliers(&mut s, 2.0);
        assert_eq!(s.y1, before);
        assert_eq!(s.y2, zeros(3));
    }

    #[test]
    fn multiplier_increment_and_linearity() {
        let mut s = state(2);
        s.j = eye(2);
        update_multipliers(&mut s, 1.0);
        assert_eq!(s.y1, eye(2));
        update_multipliers(&mut s, 1.0);
        assert_eq!(s.y1, eye(2) * 2.0);
    }
}
