//! Distance to the eigenspace, Dirichlet energy and normalized smoothness of
//! node features. Feature matrices are `d×n`: one row per feature dimension.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{PropagationOperator, SpectralBasis};
use crate::linalg::{norm, Matrix};

const TRACE_CLAMP: f64 = -1e-12;
const TRACE_FAIL: f64 = -1e-9;

fn check_cols(h: &Matrix, n: usize, op: &'static str) -> Result<()> {
    if h.cols() != n {
        return Err(Error::shape(op, h.shape(), (n, n)));
    }
    Ok(())
}

/// Projection `H Q Qᵀ` onto `R^d ⊗ M`.
pub fn project_to_eigenspace(h: &Matrix, basis: &SpectralBasis) -> Result<Matrix> {
    check_cols(h, basis.node_count(), "project_to_eigenspace")?;
    h.matmul(&basis.q)?.matmul(&basis.q.transpose())
}

/// Splits `H` into `(H_M, H_M⊥)`.
pub fn decompose(h: &Matrix, basis: &SpectralBasis) -> Result<(Matrix, Matrix)> {
    let h_m = project_to_eigenspace(h, basis)?;
    let h_perp = h.sub(&h_m)?;
    Ok((h_m, h_perp))
}

/// `‖H‖_{M⊥}`.
pub fn distance_to_eigenspace(h: &Matrix, basis: &SpectralBasis) -> Result<f64> {
    Ok(decompose(h, basis)?.1.frobenius_norm())
}

/// `Trace(H Δ̃ Hᵀ)` with round-off negatives clamped to zero.
pub fn dirichlet_energy_sq(h: &Matrix, op: &PropagationOperator) -> Result<f64> {
    check_cols(h, op.node_count(), "dirichlet_energy")?;
    let trace = h.matmul(&op.laplacian)?.frobenius_inner(h)?;
    if trace < TRACE_FAIL {
        return Err(Error::Numerical(format!(
            "Dirichlet trace is {trace:e}; the Laplacian is not positive semidefinite"
        )));
    }
    Ok(if trace < TRACE_CLAMP { 0.0 } else { trace.max(0.0) })
}

/// `‖H‖_E = sqrt(Trace(H Δ̃ Hᵀ))`.
pub fn dirichlet_energy(h: &Matrix, op: &PropagationOperator) -> Result<f64> {
    Ok(dirichlet_energy_sq(h, op)?.sqrt())
}

/// `‖H‖²_E / ‖H‖²_F`, taken as 0 for the zero matrix.
pub fn normalized_dirichlet(h: &Matrix, op: &PropagationOperator) -> Result<f64> {
    let e = dirichlet_energy_sq(h, op)?;
    let f = h.frobenius_norm_sq();
    Ok(if f == 0.0 { 0.0 } else { e / f })
}

fn coefficients(z: &[f64], basis: &SpectralBasis) -> Result<Vec<f64>> {
    if z.len() != basis.node_count() {
        return Err(Error::shape(
            "eigenspace_norm",
            (1, z.len()),
            (basis.node_count(), basis.m),
        ));
    }
    let q = &basis.q;
    Ok((0..basis.m)
        .map(|c| z.iter().enumerate().map(|(i, &zi)| zi * q[(i, c)]).sum())
        .collect())
}

/// `‖Qᵀz‖`, the length of the eigenspace component of one feature row.
pub fn eigenspace_norm(z: &[f64], basis: &SpectralBasis) -> Result<f64> {
    Ok(norm(&coefficients(z, basis)?))
}

/// `‖z_M⊥‖` for a single feature row, from the explicit residual `z − QQᵀz`.
pub fn row_distance(z: &[f64], basis: &SpectralBasis) -> Result<f64> {
    let coef = coefficients(z, basis)?;
    let q = &basis.q;
    let mut sq = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let proj: f64 = coef.iter().enumerate().map(|(c, k)| k * q[(i, c)]).sum();
        sq += (zi - proj) * (zi - proj);
    }
    Ok(sq.sqrt())
}

/// `s(z) = ‖z_M‖ / ‖z‖`, and 1 for the zero vector.
pub fn normalized_smoothness(z: &[f64], basis: &SpectralBasis) -> Result<f64> {
    let zm = eigenspace_norm(z, basis)?;
    let zn = norm(z);
    if zn == 0.0 {
        return Ok(1.0);
    }
    Ok((zm / zn).min(1.0))
}

/// `s` of every row of `H`.
pub fn row_smoothness(h: &Matrix, basis: &SpectralBasis) -> Result<Vec<f64>> {
    check_cols(h, basis.node_count(), "row_smoothness")?;
    (0..h.rows()).map(|i| normalized_smoothness(h.row(i), basis)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessReport {
    pub s: Vec<f64>,
    #[serde(rename = "dist_to_M")]
    pub dist_to_m: f64,
    pub dirichlet: f64,
    pub normalized_dirichlet: f64,
}

pub fn smoothness_report(h: &Matrix, op: &PropagationOperator, basis: &SpectralBasis) -> Result<SmoothnessReport> {
    Ok(SmoothnessReport {
        s: row_smoothness(h, basis)?,
        dist_to_m: distance_to_eigenspace(h, basis)?,
        dirichlet: dirichlet_energy(h, op)?,
        normalized_dirichlet: normalized_dirichlet(h, op)?,
    })
}
