//! Spatial basis: leading eigenpairs of the spatial correlation matrix.

use crate::error::{Error, Result};
use crate::matcalc::sym_eigen;
use nalgebra::{DMatrix, DVector};

/// Spatial kernel over pairwise Euclidean distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `exp(-d / c)`, the conventional exponential correlation.
    ExpDecay,
    /// `exp(c * d)` as printed in the source model description; grows with
    /// distance and is kept available behind this switch.
    ExpGrow,
}

/// Top-`l` orthonormal eigenvectors and eigenvalues of the kernel matrix.
pub fn build_spatial_basis(
    coords: &[(f64, f64)],
    l: usize,
    c: f64,
    kernel: Kernel,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let p = coords.len();
    if l > p || l == 0 {
        return Err(Error::invalid(format!(
            "basis size l={l} out of range for p={p}"
        )));
    }
    let mut k = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            let d = ((coords[i].0 - coords[j].0).powi(2)
                + (coords[i].1 - coords[j].1).powi(2))
            .sqrt();
            k[(i, j)] = match kernel {
                Kernel::ExpDecay => (-d / c).exp(),
                Kernel::ExpGrow => (c * d).exp(),
            };
        }
    }
    let eig = sym_eigen(&k)?;
    let phi = eig.vectors.columns(0, l).clone_owned();
    let vals = eig.values.rows(0, l).clone_owned();
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::numerical(
            "leading kernel eigenvalues are not positive",
        ));
    }
    Ok((phi, vals))
}
