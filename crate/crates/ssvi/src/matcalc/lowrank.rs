//! Woodbury solves and determinant-lemma log-determinants for
//! low-rank-plus-diagonal matrices.

use crate::error::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

fn check_inputs(
    lambda: &DMatrix<f64>,
    gamma_chol: &DMatrix<f64>,
    psi_diag: &DVector<f64>,
) -> Result<()> {
    let (n, m) = lambda.shape();
    if m > n {
        return Err(Error::invalid(format!(
            "low-rank factor must have m <= n, got {n}x{m}"
        )));
    }
    if gamma_chol.nrows() != m || gamma_chol.ncols() != m {
        return Err(Error::invalid("Gamma factor must be m x m"));
    }
    if psi_diag.len() != n {
        return Err(Error::invalid("Psi diagonal must have length n"));
    }
    if psi_diag.iter().any(|&p| p <= 0.0) {
        return Err(Error::invalid("Psi diagonal entries must be positive"));
    }
    Ok(())
}

/// Inner matrix `Gamma^{-1} + Lambda^T Psi^{-1} Lambda` of the Woodbury
/// identity, factored once and shared between the solve and the
/// log-determinant.
fn inner_cholesky(
    lambda: &DMatrix<f64>,
    gamma_chol: &DMatrix<f64>,
    psi_diag: &DVector<f64>,
) -> Result<Cholesky<f64, Dyn>> {
    let m = gamma_chol.nrows();
    // Gamma^{-1} = L^{-T} L^{-1}
    let l_inv = gamma_chol
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::numerical("Gamma factor is singular"))?;
    let gamma_inv = l_inv.transpose() * &l_inv;
    let mut scaled = lambda.clone();
    for i in 0..lambda.nrows() {
        let w = 1.0 / psi_diag[i];
        for j in 0..m {
            scaled[(i, j)] *= w;
        }
    }
    let inner = gamma_inv + lambda.transpose() * scaled;
    Cholesky::new(inner)
        .ok_or_else(|| Error::numerical("singular inner matrix in Woodbury solve"))
}

/// Solves `(Lambda Gamma Lambda^T + Psi) x = rhs` touching only `m x m`
/// dense factorizations. `gamma_chol` is the lower Cholesky factor of Gamma
/// and `psi_diag` the positive diagonal of Psi.
pub fn woodbury_solve(
    lambda: &DMatrix<f64>,
    gamma_chol: &DMatrix<f64>,
    psi_diag: &DVector<f64>,
    rhs: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_inputs(lambda, gamma_chol, psi_diag)?;
    if rhs.len() != lambda.nrows() {
        return Err(Error::invalid("rhs length does not match"));
    }
    let chol = inner_cholesky(lambda, gamma_chol, psi_diag)?;
    let w = DVector::from_fn(rhs.len(), |i, _| rhs[i] / psi_diag[i]);
    let t = lambda.transpose() * &w;
    let u = chol.solve(&t);
    let correction = lambda * u;
    Ok(DVector::from_fn(rhs.len(), |i, _| {
        w[i] - correction[i] / psi_diag[i]
    }))
}

/// `log |Lambda Gamma Lambda^T + Psi|` through the matrix determinant lemma:
/// `log|Psi| + log|Gamma| + log|Gamma^{-1} + Lambda^T Psi^{-1} Lambda|`.
pub fn lowrank_logdet(
    lambda: &DMatrix<f64>,
    gamma_chol: &DMatrix<f64>,
    psi_diag: &DVector<f64>,
) -> Result<f64> {
    check_inputs(lambda, gamma_chol, psi_diag)?;
    let chol = inner_cholesky(lambda, gamma_chol, psi_diag)?;
    let log_psi: f64 = psi_diag.iter().map(|p| p.ln()).sum();
    let mut log_gamma = 0.0;
    let mut log_inner = 0.0;
    for i in 0..gamma_chol.nrows() {
        let g = gamma_chol[(i, i)];
        let l = chol.l_dirty()[(i, i)];
        if g <= 0.0 || l <= 0.0 {
            return Err(Error::numerical("nonpositive pivot in lowrank_logdet"));
        }
        log_gamma += 2.0 * g.ln();
        log_inner += 2.0 * l.ln();
    }
    Ok(log_psi + log_gamma + log_inner)
}
