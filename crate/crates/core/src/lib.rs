//! Structure learning with similarity preservation.
//!
//! Learns an `n × n` coefficient (similarity) matrix `Z` from a kernel matrix `K` by minimizing
//!
//! ```text
//! ½·Tr(K − 2KZ + ZᵀKZ) + α‖K − ZᵀKZ‖²_F + β·ρ(Z)    s.t. diag(Z) = 0
//! ```
//!
//! where `ρ` is the nuclear norm (low-rank) or the entrywise ℓ1 norm (sparse). The first
//! term is kernel self-expression, the second keeps the inner products of the reconstructed
//! samples close to the original kernel. The problem is solved by ADMM with three splitting
//! copies of `Z`, see [`solver`].
//!
//! The learned `Z` feeds two downstream tasks:
//!
//! - spectral clustering on the Laplacian of `(|Z| + |Zᵀ|)/2` ([`graph`]),
//! - local/global consistency label propagation ([`semisupervised`]).
//!
//! [`metrics`] provides Hungarian-matched accuracy and NMI, [`harness`] runs kernel ×
//! hyperparameter grids and persists the results.
//!
//! Samples are stored as rows: a dataset is an `n × m` matrix (n samples, m features).

pub mod error;
pub mod graph;
pub mod harness;
pub mod io;
pub mod kernel;
pub mod metrics;
pub mod semisupervised;
pub mod solver;

pub use error::{Error, Result};
pub use graph::{cluster, ClusteringResult, SimilarityGraph, SpectralEmbedding};
pub use kernel::{build_kernel_bank, compute_kernel, normalize_kernel, Dataset, KernelBank, KernelMatrix, KernelSpec};
pub use metrics::{accuracy, hungarian, nmi};
pub use semisupervised::{lgc_propagate, ssl_experiment, LabelMatrix, PropagationResult, SslSummary};
pub use solver::{solve, CoefficientMatrix, Regularizer, SolveOutput, SolverConfig, SolverState};

/// Dense real matrix used throughout the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
