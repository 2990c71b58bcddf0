//! Kernel matrices from raw features.
//!
//! Three families are supported, evaluated on rows `x_i` of an `n × m` feature matrix:
//!
//! ```text
//! gaussian(t)        k(x, y) = exp(−‖x − y‖² / (t · d_max²))   d_max = max pairwise distance
//! linear             k(x, y) = xᵀy
//! polynomial(a, b)   k(x, y) = (a + xᵀy)^b
//! ```
//!
//! [`normalize_kernel`] rescales a kernel by its largest kernel-induced squared distance
//! `K_ii + K_jj − 2K_ij`, falling back to the largest absolute entry when that is the larger
//! of the two, so normalized entries never exceed 1 in magnitude.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Matrix;

/// Negative kernel-induced squared distances down to this (relative) slack are rounding noise.
const NEGATIVE_DISTANCE_SLACK: f64 = 1e-10;

/// Feature matrix with optional class labels. Samples are rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    features: Matrix,
    labels: Option<Vec<usize>>,
    classes: Option<usize>,
}

impl Dataset {
    /// Validates shape, finiteness and label density (every id in `0..c` must occur).
    pub fn new(features: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let (n, m) = features.shape();
        if n < 2 {
            return Err(Error::Input(format!("dataset needs at least 2 samples, got {n}")));
        }
        if m < 1 {
            return Err(Error::Input("dataset needs at least 1 feature".into()));
        }
        if let Some((idx, _)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            // column-major storage
            return Err(Error::Input(format!(
                "non-finite feature at sample {}, feature {}",
                idx % n,
                idx / n
            )));
        }
        let classes = match &labels {
            None => None,
            Some(labels) => {
                if labels.len() != n {
                    return Err(Error::shape(format!("{n} labels"), format!("{} labels", labels.len())));
                }
                let c = labels.iter().max().map_or(0, |&m| m + 1);
                let mut seen = vec![false; c];
                for &l in labels {
                    seen[l] = true;
                }
                if let Some(missing) = seen.iter().position(|s| !s) {
                    return Err(Error::EmptyClass(missing));
                }
                Some(c)
            }
        };
        Ok(Self {
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn classes(&self) -> Option<usize> {
        self.classes
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }
}

/// Kernel family and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `t` multiplies the squared maximal pairwise distance.
    Gaussian { t: f64 },
    Linear,
    /// Intercept `a ∈ {0, 1}`, degree `b ∈ {2, 4}`.
    Polynomial { a: u32, b: u32 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { t } if !(t.is_finite() && t > 0.0) => {
                Err(Error::Config(format!("gaussian scale t must be positive, got {t}")))
            }
            KernelSpec::Polynomial { a, b } if a > 1 || !(b == 2 || b == 4) => Err(Error::Config(format!(
                "polynomial kernel needs a in {{0,1}} and b in {{2,4}}, got a={a}, b={b}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            KernelSpec::Gaussian { .. } => "gaussian",
            KernelSpec::Linear => "linear",
            KernelSpec::Polynomial { .. } => "polynomial",
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Gaussian { t } => write!(f, "gaussian(t={t})"),
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { a, b } => write!(f, "polynomial(a={a},b={b})"),
        }
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    /// Accepts the `Display` form, e.g. `gaussian(t=0.1)`, `linear`, `polynomial(a=1,b=2)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Config(format!("unrecognized kernel spec `{s}`"));
        let (family, args) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
                (&s[..open], inner)
            }
            None => (s, ""),
        };
        let param = |name: &str| -> Result<&str> {
            args.split(',')
                .filter_map(|kv| kv.split_once('='))
                .find(|(k, _)| k.trim() == name)
                .map(|(_, v)| v.trim())
                .ok_or_else(bad)
        };
        let spec = match family.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => KernelSpec::Gaussian {
                t: param("t")?.parse().map_err(|_| bad())?,
            },
            "linear" => KernelSpec::Linear,
            "polynomial" | "poly" => KernelSpec::Polynomial {
                a: param("a")?.parse().map_err(|_| bad())?,
                b: param("b")?.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Symmetric `n × n` kernel matrix together with how it was produced.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    values: Matrix,
    spec: KernelSpec,
    normalized: bool,
    fallback_used: bool,
    scale: f64,
}

impl KernelMatrix {
    /// Wraps precomputed values. Checks squareness, finiteness and symmetry.
    pub fn from_values(values: Matrix, spec: KernelSpec, normalized: bool) -> Result<Self> {
        check_kernel_values(&values)?;
        Ok(Self {
            values,
            spec,
            normalized,
            fallback_used: false,
            scale: 1.0,
        })
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn into_values(self) -> Matrix {
        self.values
    }

    pub fn spec(&self) -> KernelSpec {
        self.spec
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// True when normalization divided by the largest absolute entry.
    pub fn fallback_used(&self) -> bool {
        self.fallback_used
    }

    /// Divisor applied by normalization (1 for raw kernels).
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }
}

/// Square, finite, and symmetric to `1e−12 · max(1, |K_ij|)`.
pub(crate) fn check_kernel_values(values: &Matrix) -> Result<()> {
    let (r, c) = values.shape();
    if r != c {
        return Err(Error::shape("square kernel matrix", format!("{r}x{c}")));
    }
    if r == 0 {
        return Err(Error::Input("empty kernel matrix".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("kernel matrix has non-finite entries".into()));
    }
    for i in 0..r {
        for j in (i + 1)..r {
            let (a, b) = (values[(i, j)], values[(j, i)]);
            if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
                return Err(Error::Input(format!(
                    "kernel matrix is not symmetric at ({i},{j}): {a} vs {b}"
                )));
            }
        }
    }
    Ok(())
}

fn squared_distance(x: &Matrix, i: usize, j: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(x.row(j).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn dot(x: &Matrix, i: usize, j: usize) -> f64 {
    x.row(i).dot(&x.row(j))
}

/// Fills a symmetric matrix from a pairwise function evaluated on the upper triangle.
fn symmetric_from(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = f(i, j);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Evaluates the raw (un-normalized) kernel on every pair of samples.
pub fn compute_kernel(data: &Dataset, spec: KernelSpec) -> Result<KernelMatrix> {
    spec.validate()?;
    let x = data.features();
    let n = data.n_samples();
    let values = match spec {
        KernelSpec::Gaussian { t } => {
            let d2 = symmetric_from(n, |i, j| if i == j { 0.0 } else { squared_distance(x, i, j) });
            let d2_max = d2.max();
            if d2_max <= 0.0 {
                return Err(Error::DegenerateScale);
            }
            let denom = t * d2_max;
            d2.map(|d| (-d / denom).exp())
        }
        KernelSpec::Linear => symmetric_from(n, |i, j| dot(x, i, j)),
        KernelSpec::Polynomial { a, b } => {
            let a = f64::from(a);
            let b = b as i32;
            symmetric_from(n, |i, j| (a + dot(x, i, j)).powi(b))
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(format!("{spec} kernel overflowed")));
    }
    Ok(KernelMatrix {
        values,
        spec,
        normalized: false,
        fallback_used: false,
        scale: 1.0,
    })
}

/// Divides every entry by `max(max_ij d²_ij, max_ij |K_ij|)` where
/// `d²_ij = K_ii + K_jj − 2K_ij` is the kernel-induced squared distance.
///
/// The squared-distance divisor is the primary rule; the absolute-entry divisor takes over
/// (and `fallback_used` is set) when it is larger, which includes the all-identical-samples
/// case `max d² = 0`.
pub fn normalize_kernel(k: &KernelMatrix) -> Result<KernelMatrix> {
    let v = &k.values;
    let n = v.nrows();
    let mut max_d2 = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = v[(i, i)] + v[(j, j)] - 2.0 * v[(i, j)];
            let slack = NEGATIVE_DISTANCE_SLACK * (v[(i, i)].abs() + v[(j, j)].abs()).max(1.0);
            if d2 < -slack {
                return Err(Error::Input(format!(
                    "kernel-induced squared distance between samples {i} and {j} is negative ({d2:e})"
                )));
            }
            max_d2 = max_d2.max(d2);
        }
    }
    let max_abs = v.amax();
    if max_abs == 0.0 {
        return Err(Error::DegenerateKernel);
    }
    let (scale, fallback_used) = if max_d2 >= max_abs {
        (max_d2, false)
    } else {
        (max_abs, true)
    };
    Ok(KernelMatrix {
        values: v / scale,
        spec: k.spec,
        normalized: true,
        fallback_used,
        scale,
    })
}

/// Predefined kernel collections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelBank {
    /// 7 gaussian + linear + 4 polynomial kernels, used for clustering.
    Clustering12,
    /// 4 gaussian + linear + 2 quadratic kernels, used for label propagation.
    Ssl7,
}

impl KernelBank {
    pub fn specs(&self) -> Vec<KernelSpec> {
        let gaussians: &[f64] = match self {
            KernelBank::Clustering12 => &[0.01, 0.05, 0.1, 1.0, 10.0, 50.0, 100.0],
            KernelBank::Ssl7 => &[0.1, 1.0, 10.0, 100.0],
        };
        let degrees: &[u32] = match self {
            KernelBank::Clustering12 => &[2, 4],
            KernelBank::Ssl7 => &[2],
        };
        let mut specs: Vec<KernelSpec> = gaussians.iter().map(|&t| KernelSpec::Gaussian { t }).collect();
        specs.push(KernelSpec::Linear);
        for a in [0, 1] {
            for &b in degrees {
                specs.push(KernelSpec::Polynomial { a, b });
            }
        }
        specs
    }
}

impl fmt::Display for KernelBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelBank::Clustering12 => "clustering12",
            KernelBank::Ssl7 => "ssl7",
        })
    }
}

impl FromStr for KernelBank {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clustering12" => Ok(KernelBank::Clustering12),
            "ssl7" => Ok(KernelBank::Ssl7),
            other => Err(Error::Config(format!("unknown kernel bank `{other}`"))),
        }
    }
}

/// Computes and normalizes every kernel of the bank, in bank order.
pub fn build_kernel_bank(data: &Dataset, bank: KernelBank) -> Result<Vec<KernelMatrix>> {
    bank.specs()
        .into_par_iter()
        .map(|spec| normalize_kernel(&compute_kernel(data, spec)?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn dataset(rows: &[&[f64]]) -> Dataset {
        let m = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Dataset::new(Matrix::from_row_slice(rows.len(), m, &flat), None).unwrap()
    }

    #[test]
    fn gaussian_identical_and_farthest_pairs() {
        let d = dataset(&[&[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0]]);
        let k = compute_kernel(&d, KernelSpec::Gaussian { t: 1.0 }).unwrap();
        assert_eq!(k.values()[(0, 1)], 1.0);
        assert_eq!(k.values()[(2, 2)], 1.0);
        assert!((k.values()[(0, 2)] - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn linear_and_polynomial_values() {
        let d = dataset(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let k = compute_kernel(&d, KernelSpec::Linear).unwrap();
        assert_eq!(k.values()[(0, 1)], 0.0);
        let p = compute_kernel(&d, KernelSpec::Polynomial { a: 1, b: 2 }).unwrap();
        // x_0 · x_0 = 1 → (1 + 1)² = 4
        assert_eq!(p.values()[(0, 0)], 4.0);
        assert_eq!(p.values()[(0, 1)], 1.0);
    }

    #[test]
    fn gaussian_on_identical_samples_is_degenerate() {
        let d = dataset(&[&[1.0, 2.0], &[1.0, 2.0]]);
        assert!(matches!(
            compute_kernel(&d, KernelSpec::Gaussian { t: 1.0 }),
            Err(Error::DegenerateScale)
        ));
    }

    #[test]
    fn non_finite_features_rejected() {
        let x = Matrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(matches!(Dataset::new(x, None), Err(Error::Input(_))));
    }

    #[test]
    fn labels_must_cover_every_class() {
        let x = Matrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert!(matches!(Dataset::new(x.clone(), Some(vec![0, 2, 2])), Err(Error::EmptyClass(1))));
        let d = Dataset::new(x, Some(vec![0, 1, 1])).unwrap();
        assert_eq!(d.classes(), Some(2));
    }

    #[test]
    fn normalize_identity() {
        let k = KernelMatrix::from_values(Matrix::identity(2, 2), KernelSpec::Linear, false).unwrap();
        let nk = normalize_kernel(&k).unwrap();
        assert_eq!(nk.values(), &dmatrix![0.5, 0.0; 0.0, 0.5]);
        assert_eq!(nk.scale(), 2.0);
        assert!(!nk.fallback_used());
        assert!(nk.is_normalized());
    }

    #[test]
    fn normalize_all_identical_uses_fallback() {
        let k = KernelMatrix::from_values(dmatrix![1.0, 1.0; 1.0, 1.0], KernelSpec::Linear, false).unwrap();
        let nk = normalize_kernel(&k).unwrap();
        assert_eq!(nk.values(), &dmatrix![1.0, 1.0; 1.0, 1.0]);
        assert!(nk.fallback_used());
    }

    #[test]
    fn normalize_zero_matrix_errors() {
        let k = KernelMatrix::from_values(Matrix::zeros(3, 3), KernelSpec::Linear, false).unwrap();
        assert!(matches!(normalize_kernel(&k), Err(Error::DegenerateKernel)));
    }

    #[test]
    fn normalize_rejects_clearly_indefinite_distances() {
        // d² = 0 + 0 − 2·1 < 0
        let k = KernelMatrix::from_values(dmatrix![0.0, 1.0; 1.0, 0.0], KernelSpec::Linear, false).unwrap();
        assert!(matches!(normalize_kernel(&k), Err(Error::Input(_))));
    }

    #[test]
    fn asymmetric_values_rejected() {
        assert!(KernelMatrix::from_values(dmatrix![1.0, 0.5; 0.4, 1.0], KernelSpec::Linear, false).is_err());
    }

    #[test]
    fn bank_sizes_and_contents() {
        let d = dataset(&[&[0.0, 1.0], &[1.0, 0.5], &[2.0, 0.0], &[0.3, 0.3]]);
        let c12 = build_kernel_bank(&d, KernelBank::Clustering12).unwrap();
        assert_eq!(c12.len(), 12);
        assert!(c12.iter().all(|k| k.is_normalized()));
        assert_eq!(c12[1].spec(), KernelSpec::Gaussian { t: 0.05 });
        assert_eq!(c12[11].spec(), KernelSpec::Polynomial { a: 1, b: 4 });
        let s7 = build_kernel_bank(&d, KernelBank::Ssl7).unwrap();
        assert_eq!(s7.len(), 7);
        assert!(s7.iter().all(|k| k.is_normalized()));
        assert_eq!(s7[6].spec(), KernelSpec::Polynomial { a: 1, b: 2 });
    }

    #[test]
    fn spec_display_roundtrip() {
        for spec in KernelBank::Clustering12.specs() {
            assert_eq!(spec.to_string().parse::<KernelSpec>().unwrap(), spec);
        }
        assert!("polynomial(a=2,b=2)".parse::<KernelSpec>().is_err());
        assert!("gaussian(t=0)".parse::<KernelSpec>().is_err());
    }
}
