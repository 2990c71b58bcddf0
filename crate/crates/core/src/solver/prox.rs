//! Proximal operators of the two regularizers.

use nalgebra::SVD;

use crate::error::{Error, Result};
use crate::Matrix;

fn check_args(d: &Matrix, tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::Input(format!("threshold must be finite and nonnegative, got {tau}")));
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("proximal operator input has non-finite entries".into()));
    }
    Ok(())
}

/// Singular value thresholding: `U · diag(max(σ − τ, 0)) · Vᵀ`.
///
/// Minimizes `τ‖Z‖_* + ½‖Z − D‖²_F`.
pub fn prox_nuclear(d: &Matrix, tau: f64) -> Result<Matrix> {
    check_args(d, tau)?;
    let svd = SVD::try_new(d.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("SVD did not converge".into()))?;
    let u = svd.u.as_ref().expect("U requested");
    let v_t = svd.v_t.as_ref().expect("V requested");
    let mut out = Matrix::zeros(d.nrows(), d.ncols());
    for (k, &sigma) in svd.singular_values.iter().enumerate() {
        let shrunk = sigma - tau;
        if shrunk > 0.0 {
            out += (u.column(k) * v_t.row(k)) * shrunk;
        }
    }
    Ok(out)
}

/// Entrywise soft thresholding `sign(d)·max(|d| − τ, 0)`.
///
/// Minimizes `τ‖Z‖₁ + ½‖Z − D‖²_F`.
pub fn prox_l1(d: &Matrix, tau: f64) -> Result<Matrix> {
    check_args(d, tau)?;
    Ok(d.map(|x| soft_threshold(x, tau)))
}

#[inline]
pub fn soft_threshold(x: f64, tau: f64) -> f64 {
    if x > tau {
        x - tau
    } else if x < -tau {
        x + tau
    } else {
        0.0
    }
}

/// Sum of singular values.
pub fn nuclear_norm(z: &Matrix) -> Result<f64> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("nuclear norm of non-finite matrix".into()));
    }
    let svd = SVD::try_new(z.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::Decomposition("SVD did not converge".into()))?;
    Ok(svd.singular_values.sum())
}
