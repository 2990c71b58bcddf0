use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use slsp::graph::cluster;
use slsp::harness::{run_benchmark, RowKind};
use slsp::io::{load_dataset, read_labels, read_matrix_csv, relabel_dense, write_json, write_kernel, write_matrix_csv};
use slsp::kernel::{build_kernel_bank, compute_kernel, normalize_kernel, KernelBank, KernelSpec};
use slsp::metrics::{accuracy, nmi};
use slsp::semisupervised::ssl_experiment;
use slsp::solver::{solve, Regularizer, SolverConfig};

#[derive(Parser)]
#[command(name = "slsp", version, about = "Similarity-preserving structure learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build kernel matrices (CSV + JSON sidecar) from a feature CSV.
    Kernels {
        #[arg(long)]
        data: PathBuf,
        /// Predefined bank; ignored when --kernel is given.
        #[arg(long, default_value = "clustering12")]
        bank: KernelBank,
        /// Single kernel, e.g. `gaussian(t=1)`, `linear`, `polynomial(a=1,b=2)`.
        #[arg(long)]
        kernel: Option<KernelSpec>,
        /// Skip normalization (single kernel only).
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Learn Z from a kernel matrix.
    Learn {
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long, default_value = "sparse")]
        reg: Regularizer,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 300)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Z as CSV; diagnostics go next to it with a `.json` extension.
        #[arg(long)]
        out: PathBuf,
    },
    /// Spectral clustering of a learned Z.
    Cluster {
        #[arg(long)]
        z: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label propagation with the labeled-fraction protocol.
    Ssl {
        #[arg(long)]
        z: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        fraction: f64,
        #[arg(long, default_value_t = 20)]
        repeats: usize,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and NMI of a predicted partition.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Run a kernel × hyperparameter grid from a TOML config.
    Benchmark {
        #[arg(long)]
        config: PathBuf,
    },
}

fn dense_labels(path: &Path) -> Result<Vec<usize>> {
    let raw = read_labels(path)?;
    let (dense, changed) = relabel_dense(&raw);
    if changed {
        log::warn!("{}: label ids relabeled densely", path.display());
    }
    Ok(dense)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Kernels {
            data,
            bank,
            kernel,
            raw,
            out_dir,
        } => {
            let dataset = load_dataset(&data, None)?;
            let kernels = match kernel {
                Some(spec) => {
                    let k = compute_kernel(&dataset, spec)?;
                    vec![if raw { k } else { normalize_kernel(&k)? }]
                }
                None => {
                    if raw {
                        bail!("--raw applies to a single --kernel only");
                    }
                    build_kernel_bank(&dataset, bank)?
                }
            };
            for (i, k) in kernels.iter().enumerate() {
                let path = out_dir.join(format!("kernel_{i:02}.csv"));
                write_kernel(&path, k)?;
                println!("{}\t{}", path.display(), k.spec());
            }
        }
        Command::Learn {
            kernel,
            reg,
            alpha,
            beta,
            mu,
            max_iter,
            tol,
            seed,
            out,
        } => {
            let k = read_matrix_csv(&kernel)?;
            let config = SolverConfig {
                alpha,
                beta,
                mu,
                regularizer: reg,
                max_iter,
                tol,
                seed,
            };
            let output = solve(&k, &config)?;
            write_matrix_csv(&out, &output.coefficients.values)?;
            let diag_path = out.with_extension("json");
            write_json(&diag_path, &output.diagnostics())?;
            eprintln!(
                "converged={} iterations={} rel_change={:e}",
                output.coefficients.converged, output.coefficients.iterations, output.state.rel_change
            );
        }
        Command::Cluster {
            z,
            classes,
            seed,
            labels,
            out,
        } => {
            let z = read_matrix_csv(&z)?;
            let result = cluster(&z, classes, seed)?;
            let mut report = json!({
                "assignments": result.assignments,
                "inertia": result.inertia,
            });
            if let Some(lp) = labels {
                let truth = dense_labels(&lp)?;
                report["acc"] = json!(accuracy(&result.assignments, &truth)?);
                report["nmi"] = json!(nmi(&result.assignments, &truth)?);
            }
            write_json(&out, &report)?;
        }
        Command::Ssl {
            z,
            labels,
            fraction,
            repeats,
            gamma,
            seed,
            out,
        } => {
            let z = read_matrix_csv(&z)?;
            let truth = dense_labels(&labels)?;
            let summary = ssl_experiment(&z, &truth, fraction, repeats, gamma, seed)?;
            write_json(&out, &summary)?;
            eprintln!("mean_acc={:.4} std_acc={:.4}", summary.mean_acc, summary.std_acc);
        }
        Command::Eval { pred, truth } => {
            let pred = read_labels(&pred)?;
            let truth = read_labels(&truth)?;
            let report = json!({ "acc": accuracy(&pred, &truth)?, "nmi": nmi(&pred, &truth)? });
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Benchmark { config } => {
            let (output, files) =
                run_benchmark(&config).with_context(|| format!("benchmark {}", config.display()))?;
            for row in output.rows.iter().filter(|r| r.kind == RowKind::Best) {
                eprintln!(
                    "{} {} alpha={} beta={}{} best acc={} nmi={}",
                    row.dataset,
                    row.regularizer,
                    row.alpha,
                    row.beta,
                    row.fraction.map(|f| format!(" fraction={f}")).unwrap_or_default(),
                    row.acc.map_or("-".into(), |v| format!("{v:.4}")),
                    row.nmi.map_or("-".into(), |v| format!("{v:.4}")),
                );
            }
            println!("{}", files.results_csv.display());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    run(Cli::parse())
}
