//! ADMM solver for the similarity-preserving self-expression objective.
//!
//! ```text
//! min_Z  ½·Tr(K − 2KZ + ZᵀKZ) + α‖K − ZᵀKZ‖²_F + β·ρ(Z)    s.t. diag(Z) = 0
//! ```
//!
//! The quartic term is split by introducing copies `J = Z`, `W = Z`, `H = Z`:
//!
//! ```text
//! min  ½·Tr(K − 2KJ + JᵀKJ) + α‖K − WᵀKH‖²_F + β·ρ(Z)
//! s.t. J = Z, W = Z, H = Z
//! ```
//!
//! Every iteration updates `J`, `W`, `H` in closed form, `Z` by a proximal step, and then the
//! scaled multipliers `Y₁, Y₂, Y₃`. The penalty `μ` is fixed. Iteration stops when
//! `‖Z_k − Z_{k−1}‖_F / ‖Z_{k−1}‖_F < tol` or after `max_iter` iterations.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::check_kernel_values;
use crate::Matrix;

pub mod prox;
mod updates;

pub use prox::{nuclear_norm, prox_l1, prox_nuclear};
pub use updates::{update_h, update_j, update_multipliers, update_w, update_z, JSystem};

/// Regularizer on `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularizer {
    /// Nuclear norm.
    #[serde(alias = "low_rank")]
    LowRank,
    /// Entrywise ℓ1 norm.
    Sparse,
}

impl Regularizer {
    pub fn penalty(&self, z: &Matrix) -> Result<f64> {
        match self {
            Regularizer::LowRank => nuclear_norm(z),
            Regularizer::Sparse => Ok(z.abs().sum()),
        }
    }
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::LowRank => "lowrank",
            Regularizer::Sparse => "sparse",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lowrank" | "low_rank" | "low-rank" | "r" => Ok(Regularizer::LowRank),
            "sparse" | "s" => Ok(Regularizer::Sparse),
            other => Err(Error::Config(format!("unknown regularizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Weight of the similarity-preserving term.
    pub alpha: f64,
    /// Weight of the regularizer.
    pub beta: f64,
    /// ADMM penalty.
    pub mu: f64,
    pub regularizer: Regularizer,
    pub max_iter: usize,
    pub tol: f64,
    /// Seeds the random initialization of `H` and `Z`.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.1,
            mu: 1.0,
            regularizer: Regularizer::Sparse,
            max_iter: 300,
            tol: 1e-5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        check(self.alpha.is_finite() && self.alpha >= 0.0, format!("alpha must be >= 0, got {}", self.alpha))?;
        check(self.beta.is_finite() && self.beta > 0.0, format!("beta must be > 0, got {}", self.beta))?;
        check(self.mu.is_finite() && self.mu > 0.0, format!("mu must be > 0, got {}", self.mu))?;
        check(self.max_iter >= 1, "max_iter must be >= 1".into())?;
        check(self.tol.is_finite() && self.tol > 0.0, format!("tol must be > 0, got {}", self.tol))
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// `‖J − Z‖_F`
    pub j: f64,
    /// `‖W − Z‖_F`
    pub w: f64,
    /// `‖H − Z‖_F`
    pub h: f64,
    pub objective: f64,
    pub rel_change: f64,
}

/// ADMM iterates and multipliers.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub j: Matrix,
    pub w: Matrix,
    pub h: Matrix,
    pub z: Matrix,
    pub y1: Matrix,
    pub y2: Matrix,
    pub y3: Matrix,
    pub iter: usize,
    pub rel_change: f64,
    pub history: Vec<IterationRecord>,
}

impl SolverState {
    pub fn zeros(n: usize) -> Self {
        let zero = Matrix::zeros(n, n);
        Self {
            j: zero.clone(),
            w: zero.clone(),
            h: zero.clone(),
            z: zero.clone(),
            y1: zero.clone(),
            y2: zero.clone(),
            y3: zero,
            iter: 0,
            rel_change: f64::INFINITY,
            history: Vec::new(),
        }
    }

    /// `H` and `Z` drawn i.i.d. uniform on `[0, 1/n]` (`H` first, row-major), `diag(Z) = 0`,
    /// multipliers zero.
    pub fn random_init(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / n as f64;
        let mut state = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                state.h[(i, j)] = rng.random::<f64>() * scale;
            }
        }
        for i in 0..n {
            for j in 0..n {
                state.z[(i, j)] = rng.random::<f64>() * scale;
            }
        }
        state.z.fill_diagonal(0.0);
        state
    }

    /// Largest split residual `max(‖J−Z‖, ‖W−Z‖, ‖H−Z‖)`.
    pub fn max_split_residual(&self) -> f64 {
        let r = [&self.j, &self.w, &self.h].map(|m| (m - &self.z).norm());
        r.into_iter().fold(0.0, f64::max)
    }

    fn all_finite(&self) -> bool {
        [&self.j, &self.w, &self.h, &self.z, &self.y1, &self.y2, &self.y3]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

/// Learned coefficient matrix with zero diagonal.
#[derive(Debug, Clone)]
pub struct CoefficientMatrix {
    pub values: Matrix,
    pub regularizer: Regularizer,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub coefficients: CoefficientMatrix,
    pub state: SolverState,
}

/// JSON-serializable summary of a solve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub final_rel_change: f64,
    pub residuals: Vec<[f64; 3]>,
    pub objective: Vec<f64>,
}

impl SolveOutput {
    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            converged: self.coefficients.converged,
            iterations: self.coefficients.iterations,
            final_rel_change: self.state.rel_change,
            residuals: self.state.history.iter().map(|r| [r.j, r.w, r.h]).collect(),
            objective: self.state.history.iter().map(|r| r.objective).collect(),
        }
    }
}

fn check_pair(k: &Matrix, z: &Matrix) -> Result<()> {
    if !k.is_square() || k.shape() != z.shape() {
        return Err(Error::shape(
            format!("square K and Z of equal size (K is {}x{})", k.nrows(), k.ncols()),
            format!("Z {}x{}", z.nrows(), z.ncols()),
        ));
    }
    Ok(())
}

/// `½·Tr(K − 2KZ + ZᵀKZ) + α‖K − ZᵀKZ‖²_F`.
pub fn smooth_objective(k: &Matrix, z: &Matrix, alpha: f64) -> Result<f64> {
    check_pair(k, z)?;
    let kz = k * z;
    let ztkz = z.transpose() * &kz;
    let self_expression = 0.5 * (k.trace() - 2.0 * kz.trace() + ztkz.trace());
    let preserve = (k - &ztkz).norm_squared();
    Ok(self_expression + alpha * preserve)
}

/// Gradient of [`smooth_objective`] for symmetric `K`:
///
/// ```text
/// ∇f(Z) = KZ − K − 2α·KZ(Rᵀ + R),   R = K − ZᵀKZ
/// ```
pub fn smooth_gradient(k: &Matrix, z: &Matrix, alpha: f64) -> Result<Matrix> {
    check_pair(k, z)?;
    let kz = k * z;
    let r = k - z.transpose() * &kz;
    let r_sum = r.transpose() + &r;
    Ok(&kz - k - (&kz * r_sum) * (2.0 * alpha))
}

/// Full objective including `β·ρ(Z)`. Requires `diag(Z) = 0`.
pub fn evaluate_objective(k: &Matrix, z: &Matrix, alpha: f64, beta: f64, regularizer: Regularizer) -> Result<f64> {
    check_pair(k, z)?;
    if let Some(i) = (0..z.nrows()).find(|&i| z[(i, i)] != 0.0) {
        return Err(Error::Input(format!("Z must have zero diagonal, Z[{i},{i}] = {}", z[(i, i)])));
    }
    Ok(smooth_objective(k, z, alpha)? + beta * regularizer.penalty(z)?)
}

/// Runs ADMM from the seeded random initialization.
pub fn solve(k: &Matrix, config: &SolverConfig) -> Result<SolveOutput> {
    config.validate()?;
    check_kernel_values(k)?;
    let n = k.nrows();

    let lambda_min = k.clone().symmetric_eigenvalues().min();
    if config.mu <= -lambda_min + 1e-8 {
        return Err(Error::Conditioning {
            system: "J update (K + μI)",
            detail: format!("μ = {} must exceed −λ_min(K) = {}", config.mu, -lambda_min),
        });
    }
    let j_system = JSystem::new(k, config.mu)?;

    let mut state = SolverState::random_init(n, config.seed);
    let mut converged = false;

    for iter in 1..=config.max_iter {
        state.j = j_system.solve(&state.z, &state.y1);
        state.w = update_w(k, &state.h, &state.z, &state.y2, config.mu, config.alpha)?;
        state.h = update_h(k, &state.w, &state.z, &state.y3, config.mu, config.alpha)?;
        let z_new = update_z(
            &state.j,
            &state.w,
            &state.h,
            &state.y1,
            &state.y2,
            &state.y3,
            config.mu,
            config.beta,
            config.regularizer,
        )?;
        let rel_change = (&z_new - &state.z).norm() / state.z.norm().max(1e-12);
        state.z = z_new;
        update_multipliers(&mut state, config.mu);
        state.iter = iter;
        state.rel_change = rel_change;

        if !state.all_finite() || !rel_change.is_finite() {
            return Err(Error::Divergence { iteration: iter });
        }

        state.history.push(IterationRecord {
            j: (&state.j - &state.z).norm(),
            w: (&state.w - &state.z).norm(),
            h: (&state.h - &state.z).norm(),
            objective: evaluate_objective(k, &state.z, config.alpha, config.beta, config.regularizer)?,
            rel_change,
        });

        if rel_change < config.tol {
            converged = true;
            break;
        }
    }

    log::debug!(
        "solve n={n} reg={} converged={converged} iterations={} rel_change={:e}",
        config.regularizer,
        state.iter,
        state.rel_change
    );

    Ok(SolveOutput {
        coefficients: CoefficientMatrix {
            values: state.z.clone(),
            regularizer: config.regularizer,
            converged,
            iterations: state.iter,
        },
        state,
    })
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    pub fn random_matrix(rng: &mut impl Rng, n: usize) -> Matrix {
        Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
    }

    /// `AAᵀ/n` for a random square `A`.
    pub fn random_psd(rng: &mut impl Rng, n: usize) -> Matrix {
        let a = random_matrix(rng, n);
        let k = &a * a.transpose() / n as f64;
        (&k + k.transpose()) * 0.5
    }
}
