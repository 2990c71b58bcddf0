//! Kernel × hyperparameter grids, summaries and result files.
//!
//! Summary rows follow the reporting convention of benchmark tables for this method: the
//! best value over the kernel bank and the mean over the bank. "Best" is selected with
//! ground-truth metrics, so it is an oracle-selection protocol for comparison with
//! published numbers, not a model-selection method.
//!
//! Configuration is TOML:
//!
//! ```toml
//! task = "clustering"            # or "ssl"
//! dataset = "features.csv"       # relative paths resolve against the config file
//! labels = "labels.csv"
//! bank = "clustering12"          # or "ssl7"
//! regularizers = ["lowrank", "sparse"]
//! alphas = [0.1]
//! betas = [0.1]
//! seed = 0
//! output_dir = "results"
//! save_z = false
//!
//! [solver]
//! mu = 1.0
//! max_iter = 300
//! tol = 1e-5
//!
//! [ssl]
//! gammas = [1.0]
//! fractions = [0.1, 0.3, 0.5]
//! repeats = 20
//! ```

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, cluster, laplacian};
use crate::io::{load_dataset, write_file, write_json, write_matrix_csv};
use crate::kernel::{build_kernel_bank, Dataset, KernelBank, KernelMatrix};
use crate::metrics::{accuracy, nmi};
use crate::semisupervised::ssl_on_laplacian;
use crate::solver::{solve, Regularizer, SolverConfig};
use crate::Matrix;

/// Environment variable bounding the worker pool.
pub const WORKERS_ENV: &str = "SLSP_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Clustering,
    Ssl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_mu() -> f64 {
    1.0
}
fn default_max_iter() -> usize {
    300
}
fn default_tol() -> f64 {
    1e-5
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            mu: default_mu(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SslSection {
    #[serde(default = "default_gammas")]
    pub gammas: Vec<f64>,
    #[serde(default = "default_fractions")]
    pub fractions: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_gammas() -> Vec<f64> {
    vec![1.0]
}
fn default_fractions() -> Vec<f64> {
    vec![0.1, 0.3, 0.5]
}
fn default_repeats() -> usize {
    20
}

impl Default for SslSection {
    fn default() -> Self {
        Self {
            gammas: default_gammas(),
            fractions: default_fractions(),
            repeats: default_repeats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset name used in result rows; defaults to the feature file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub task: Task,
    pub dataset: PathBuf,
    pub labels: PathBuf,
    pub bank: KernelBank,
    pub regularizers: Vec<Regularizer>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub save_z: bool,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub ssl: SslSection,
}

impl ExperimentConfig {
    /// Parses a TOML config; relative paths are resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config: ExperimentConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.dataset, &mut config.labels, &mut config.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} must not be empty")))
            }
        };
        nonempty(!self.regularizers.is_empty(), "regularizers")?;
        nonempty(!self.alphas.is_empty(), "alphas")?;
        nonempty(!self.betas.is_empty(), "betas")?;
        for &alpha in &self.alphas {
            for &beta in &self.betas {
                self.solver_config(Regularizer::Sparse, alpha, beta).validate()?;
            }
        }
        if self.task == Task::Ssl {
            nonempty(!self.ssl.fractions.is_empty(), "ssl.fractions")?;
            nonempty(!self.ssl.gammas.is_empty(), "ssl.gammas")?;
            if self.ssl.repeats == 0 {
                return Err(Error::Config("ssl.repeats must be at least 1".into()));
            }
            if let Some(f) = self.ssl.fractions.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
                return Err(Error::Config(format!("labeled fraction must be in (0, 1), got {f}")));
            }
            if let Some(g) = self.ssl.gammas.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
                return Err(Error::Config(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }

    pub fn dataset_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
        })
    }

    pub fn solver_config(&self, regularizer: Regularizer, alpha: f64, beta: f64) -> SolverConfig {
        SolverConfig {
            alpha,
            beta,
            mu: self.solver.mu,
            regularizer,
            max_iter: self.solver.max_iter,
            tol: self.solver.tol,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowKind {
    Cell,
    Best,
    Mean,
}

impl RowKind {
    fn as_str(&self) -> &'static str {
        match self {
            RowKind::Cell => "cell",
            RowKind::Best => "best",
            RowKind::Mean => "mean",
        }
    }
}

/// One grid cell or one summary over the kernel bank.
///
/// For clustering rows `acc`/`nmi` are the cell metrics; for label propagation `acc` is the
/// mean accuracy over repeats and `std` its standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub task: Task,
    pub kind: RowKind,
    pub kernel: String,
    /// Position in the bank; `None` for summaries.
    pub kernel_index: Option<usize>,
    pub regularizer: Regularizer,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub fraction: Option<f64>,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub std: Option<f64>,
    /// Number of successful cells a summary covers (1 for a successful cell).
    pub count: usize,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    /// `ok` or the error that made the cell fail.
    pub status: String,
    pub runtime_ms: f64,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    fn group_key(&self) -> (Regularizer, f64, f64, Option<f64>, Option<f64>) {
        (self.regularizer, self.alpha, self.beta, self.gamma, self.fraction)
    }
}

fn cmp_opt(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (a, b) => a.is_some().cmp(&b.is_some()),
    }
}

/// Canonical row order: grid point, then cells before summaries, then bank position.
pub fn canonical_order(a: &ResultRow, b: &ResultRow) -> Ordering {
    a.regularizer
        .cmp(&b.regularizer)
        .then(a.alpha.total_cmp(&b.alpha))
        .then(a.beta.total_cmp(&b.beta))
        .then(cmp_opt(a.gamma, b.gamma))
        .then(cmp_opt(a.fraction, b.fraction))
        .then(a.kind.cmp(&b.kind))
        .then(a.kernel_index.cmp(&b.kernel_index))
}

/// Rows of a finished grid plus any coefficient matrices kept for persistence.
#[derive(Debug, Clone)]
pub struct GridOutput {
    pub rows: Vec<ResultRow>,
    /// `(file stem, Z)` per successful solve when `save_z` is set.
    pub z_matrices: Vec<(String, Matrix)>,
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))
}

struct SolveCell {
    kernel_index: usize,
    regularizer: Regularizer,
    alpha: f64,
    beta: f64,
}

fn solve_cells(config: &ExperimentConfig, n_kernels: usize) -> Vec<SolveCell> {
    let mut cells = Vec::new();
    for kernel_index in 0..n_kernels {
        for &regularizer in &config.regularizers {
            for &alpha in &config.alphas {
                for &beta in &config.betas {
                    cells.push(SolveCell {
                        kernel_index,
                        regularizer,
                        alpha,
                        beta,
                    });
                }
            }
        }
    }
    cells
}

fn z_stem(cell: &SolveCell) -> String {
    format!("{}_k{:02}_a{}_b{}", cell.regularizer, cell.kernel_index, cell.alpha, cell.beta)
}

fn load_labeled(config: &ExperimentConfig) -> Result<(Dataset, Vec<usize>, usize)> {
    let data = load_dataset(&config.dataset, Some(&config.labels))?;
    let labels = data.labels().expect("labels loaded").to_vec();
    let classes = data.classes().expect("labels loaded");
    Ok((data, labels, classes))
}

fn base_row(config: &ExperimentConfig, kernel: &KernelMatrix, cell: &SolveCell) -> ResultRow {
    ResultRow {
        dataset: config.dataset_name(),
        task: config.task,
        kind: RowKind::Cell,
        kernel: kernel.spec().to_string(),
        kernel_index: Some(cell.kernel_index),
        regularizer: cell.regularizer,
        alpha: cell.alpha,
        beta: cell.beta,
        gamma: None,
        fraction: None,
        acc: None,
        nmi: None,
        std: None,
        count: 0,
        converged: None,
        iterations: None,
        status: "ok".into(),
        runtime_ms: 0.0,
    }
}

/// Solve → spectral clustering → Acc/NMI for every kernel × regularizer × (α, β).
pub fn run_clustering_experiment(config: &ExperimentConfig) -> Result<GridOutput> {
    config.validate()?;
    let (data, labels, classes) = load_labeled(config)?;
    let pool = worker_pool()?;
    pool.install(|| {
        let kernels = build_kernel_bank(&data, config.bank)?;
        let cells = solve_cells(config, kernels.len());
        let results: Vec<(ResultRow, Option<(String, Matrix)>)> = cells
            .par_iter()
            .map(|cell| {
                let kernel = &kernels[cell.kernel_index];
                let mut row = base_row(config, kernel, cell);
                let start = Instant::now();
                let outcome = solve(kernel.values(), &config.solver_config(cell.regularizer, cell.alpha, cell.beta))
                    .and_then(|out| {
                        let assignment = cluster(&out.coefficients.values, classes, config.seed)?;
                        Ok((out, assignment))
                    });
                let mut saved = None;
                match outcome {
                    Ok((out, assignment)) => {
                        row.acc = Some(accuracy(&assignment.assignments, &labels).expect("lengths match"));
                        row.nmi = Some(nmi(&assignment.assignments, &labels).expect("lengths match"));
                        row.count = 1;
                        row.converged = Some(out.coefficients.converged);
                        row.iterations = Some(out.coefficients.iterations);
                        if config.save_z {
                            saved = Some((z_stem(cell), out.coefficients.values));
                        }
                    }
                    Err(e) => {
                        log::warn!("cell {} / {} failed: {e}", row.kernel, row.regularizer);
                        row.status = format!("failed: {e}");
                        row.converged = Some(false);
                    }
                }
                row.runtime_ms = start.elapsed().as_secs_f64() * 1e3;
                (row, saved)
            })
            .collect();
        Ok(finish(results))
    })
}

/// Learns `Z` once per kernel × regularizer × (α, β), then runs the labeled-fraction
/// protocol for every γ and fraction.
pub fn run_ssl_experiment(config: &ExperimentConfig) -> Result<GridOutput> {
    config.validate()?;
    let (data, labels, _) = load_labeled(config)?;
    let pool = worker_pool()?;
    pool.install(|| {
        let kernels = build_kernel_bank(&data, config.bank)?;
        let cells = solve_cells(config, kernels.len());
        let results: Vec<Vec<(ResultRow, Option<(String, Matrix)>)>> = cells
            .par_iter()
            .map(|cell| {
                let kernel = &kernels[cell.kernel_index];
                let start = Instant::now();
                let solved = solve(kernel.values(), &config.solver_config(cell.regularizer, cell.alpha, cell.beta))
                    .and_then(|out| {
                        let l = laplacian(&build_graph(&out.coefficients.values)?);
                        Ok((out, l))
                    });
                let solve_ms = start.elapsed().as_secs_f64() * 1e3;
                let mut rows = Vec::new();
                for &gamma in &config.ssl.gammas {
                    for &fraction in &config.ssl.fractions {
                        let mut row = base_row(config, kernel, cell);
                        row.gamma = Some(gamma);
                        row.fraction = Some(fraction);
                        let start = Instant::now();
                        let outcome = solved.as_ref().map_err(|e| e.to_string()).and_then(|(out, l)| {
                            ssl_on_laplacian(l, &labels, fraction, config.ssl.repeats, gamma, config.seed)
                                .map(|s| (out, s))
                                .map_err(|e| e.to_string())
                        });
                        match outcome {
                            Ok((out, summary)) => {
                                row.acc = Some(summary.mean_acc);
                                row.std = Some(summary.std_acc);
                                row.count = 1;
                                row.converged = Some(out.coefficients.converged);
                                row.iterations = Some(out.coefficients.iterations);
                            }
                            Err(e) => {
                                row.status = format!("failed: {e}");
                                row.converged = Some(false);
                            }
                        }
                        row.runtime_ms = solve_ms + start.elapsed().as_secs_f64() * 1e3;
                        rows.push((row, None));
                    }
                }
                if let (true, Ok((out, _))) = (config.save_z, &solved) {
                    if let Some(first) = rows.first_mut() {
                        first.1 = Some((z_stem(cell), out.coefficients.values.clone()));
                    }
                }
                rows
            })
            .collect();
        Ok(finish(results.into_iter().flatten().collect()))
    })
}

fn finish(results: Vec<(ResultRow, Option<(String, Matrix)>)>) -> GridOutput {
    let mut z_matrices = Vec::new();
    let mut rows = Vec::with_capacity(results.len());
    for (row, z) in results {
        rows.push(row);
        z_matrices.extend(z);
    }
    rows.extend(summarize(&rows));
    rows.sort_by(canonical_order);
    z_matrices.sort_by(|a, b| a.0.cmp(&b.0));
    GridOutput { rows, z_matrices }
}

/// Best-over-kernels and mean-over-kernels rows for every grid point, computed from
/// successful cell rows only.
pub fn summarize(rows: &[ResultRow]) -> Vec<ResultRow> {
    let mut cells: Vec<&ResultRow> = rows.iter().filter(|r| r.kind == RowKind::Cell).collect();
    cells.sort_by(|a, b| canonical_order(a, b));
    let mut out = Vec::new();
    for group in cells.chunk_by(|a, b| a.group_key() == b.group_key()) {
        let ok: Vec<&ResultRow> = group.iter().copied().filter(|r| r.is_ok()).collect();
        let template = group[0];
        let count = ok.len();
        let runtime_ms: f64 = group.iter().map(|r| r.runtime_ms).sum();
        let status = if count == 0 { "no successful cells".to_string() } else { "ok".to_string() };
        let summary = |kind: RowKind, kernel: String| ResultRow {
            kind,
            kernel,
            kernel_index: None,
            acc: None,
            nmi: None,
            std: None,
            count,
            converged: None,
            iterations: None,
            status: status.clone(),
            runtime_ms,
            ..template.clone()
        };

        let best_by_acc = ok.iter().copied().reduce(|best, r| {
            if r.acc.unwrap_or(f64::NEG_INFINITY) > best.acc.unwrap_or(f64::NEG_INFINITY) {
                r
            } else {
                best
            }
        });
        let mut best = summary(
            RowKind::Best,
            best_by_acc.map_or_else(|| "best".into(), |r| format!("best:{}", r.kernel)),
        );
        best.acc = best_by_acc.and_then(|r| r.acc);
        best.std = best_by_acc.and_then(|r| r.std);
        best.nmi = ok.iter().filter_map(|r| r.nmi).reduce(f64::max);

        let mut mean = summary(RowKind::Mean, "mean".into());
        let avg = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        mean.acc = avg(ok.iter().filter_map(|r| r.acc).collect());
        mean.nmi = avg(ok.iter().filter_map(|r| r.nmi).collect());

        out.push(best);
        out.push(mean);
    }
    out
}

pub const CSV_HEADER: [&str; 16] = [
    "dataset",
    "task",
    "kind",
    "kernel",
    "regularizer",
    "alpha",
    "beta",
    "gamma",
    "fraction",
    "acc",
    "nmi",
    "std",
    "count",
    "converged",
    "iterations",
    "status",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Results CSV: fixed column order, no timing columns (timings live in the manifest) so
/// reruns with the same config are byte-identical.
pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            match r.task {
                Task::Clustering => "clustering".into(),
                Task::Ssl => "ssl".into(),
            },
            r.kind.as_str().into(),
            r.kernel.clone(),
            r.regularizer.to_string(),
            r.alpha.to_string(),
            r.beta.to_string(),
            opt(r.gamma),
            opt(r.fraction),
            opt(r.acc),
            opt(r.nmi),
            opt(r.std),
            r.count.to_string(),
            opt(r.converged),
            opt(r.iterations),
            r.status.clone(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| Error::Input(format!("csv buffer: {}", e.error())))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingEntry {
    pub kind: RowKind,
    pub kernel: String,
    pub regularizer: Regularizer,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub fraction: Option<f64>,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub rows: usize,
    pub failures: usize,
    pub wall_clock_ms: f64,
    pub timings: Vec<TimingEntry>,
}

#[derive(Debug, Clone)]
pub struct PersistedFiles {
    pub results_csv: PathBuf,
    pub manifest: PathBuf,
    pub z_files: Vec<PathBuf>,
}

/// Writes `results.csv`, `manifest.json` and, if any, `z/<stem>.csv` into `dir`.
pub fn persist_results(
    config: &ExperimentConfig,
    output: &GridOutput,
    wall_clock_ms: f64,
    dir: &Path,
) -> Result<PersistedFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results_csv_path = dir.join("results.csv");
    write_file(&results_csv_path, &results_csv(&output.rows)?)?;

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        rows: output.rows.len(),
        failures: output.rows.iter().filter(|r| r.kind == RowKind::Cell && !r.is_ok()).count(),
        wall_clock_ms,
        timings: output
            .rows
            .iter()
            .map(|r| TimingEntry {
                kind: r.kind,
                kernel: r.kernel.clone(),
                regularizer: r.regularizer,
                alpha: r.alpha,
                beta: r.beta,
                gamma: r.gamma,
                fraction: r.fraction,
                runtime_ms: r.runtime_ms,
            })
            .collect(),
    };
    let manifest_path = dir.join("manifest.json");
    write_json(&manifest_path, &manifest)?;

    let mut z_files = Vec::new();
    for (stem, z) in &output.z_matrices {
        let p = dir.join("z").join(format!("{stem}.csv"));
        write_matrix_csv(&p, z)?;
        z_files.push(p);
    }
    Ok(PersistedFiles {
        results_csv: results_csv_path,
        manifest: manifest_path,
        z_files,
    })
}

/// Loads a config, runs its grid and persists everything into `output_dir`.
pub fn run_benchmark(config_path: &Path) -> Result<(GridOutput, PersistedFiles)> {
    let config = ExperimentConfig::from_file(config_path)?;
    let start = Instant::now();
    let output = match config.task {
        Task::Clustering => run_clustering_experiment(&config)?,
        Task::Ssl => run_ssl_experiment(&config)?,
    };
    let wall_clock_ms = start.elapsed().as_secs_f64() * 1e3;
    let files = persist_results(&config, &output, wall_clock_ms, &config.output_dir)?;
    Ok((output, files))
}
