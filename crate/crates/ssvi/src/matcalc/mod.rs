//! Matrix-calculus and structured linear-algebra kernels.
//!
//! Everything here is a pure function of its inputs and safe to call
//! concurrently.

mod banded;
mod eigen;
mod lowrank;
mod sparse;

pub use banded::{banded_cholesky, BandedLowerTriangular, SymmetricBanded};
pub use eigen::{d_matrix_power_neg_d, matrix_power_neg_d, sym_eigen, SymEigen};
pub use lowrank::{lowrank_logdet, woodbury_solve};
pub use sparse::SparseLowerTriangular;

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Half-vectorization: stacks the lower triangle of a square matrix column
/// by column, diagonal included. Only the lower triangle is read.
pub fn vech(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = a.nrows();
    if a.ncols() != k {
        return Err(Error::invalid(format!(
            "vech expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut out = DVector::zeros(k * (k + 1) / 2);
    let mut idx = 0;
    for j in 0..k {
        for i in j..k {
            out[idx] = a[(i, j)];
            idx += 1;
        }
    }
    Ok(out)
}

/// Inverse of [`vech`] onto a symmetric matrix.
pub fn unvech_symmetric(v: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
    if v.len() != k * (k + 1) / 2 {
        return Err(Error::invalid(format!(
            "vech vector of length {} does not match dimension {}",
            v.len(),
            k
        )));
    }
    let mut a = DMatrix::zeros(k, k);
    let mut idx = 0;
    for j in 0..k {
        for i in j..k {
            a[(i, j)] = v[idx];
            a[(j, i)] = v[idx];
            idx += 1;
        }
    }
    Ok(a)
}

/// Inverse of [`vech`] onto a lower-triangular matrix (upper part zero).
pub fn unvech_lower(v: &DVector<f64>, k: usize) -> Result<DMatrix<f64>> {
    if v.len() != k * (k + 1) / 2 {
        return Err(Error::invalid(format!(
            "vech vector of length {} does not match dimension {}",
            v.len(),
            k
        )));
    }
    let mut a = DMatrix::zeros(k, k);
    let mut idx = 0;
    for j in 0..k {
        for i in j..k {
            a[(i, j)] = v[idx];
            idx += 1;
        }
    }
    Ok(a)
}

/// Position of entry `(i, j)`, `i >= j`, inside `vech` of a `k x k` matrix.
pub fn vech_index(i: usize, j: usize, k: usize) -> usize {
    debug_assert!(i >= j && i < k);
    // columns 0..j contribute k-0, k-1, ..., k-(j-1) entries
    j * k - j * (j + 1) / 2 + j + (i - j)
}

/// Elimination matrix `L_k` with `vech(A) = L_k vec(A)`.
pub fn elimination_matrix(k: usize) -> Result<DMatrix<f64>> {
    if k < 1 {
        return Err(Error::invalid("elimination matrix needs k >= 1"));
    }
    let m = k * (k + 1) / 2;
    let mut l = DMatrix::zeros(m, k * k);
    let mut row = 0;
    for j in 0..k {
        for i in j..k {
            l[(row, j * k + i)] = 1.0;
            row += 1;
        }
    }
    Ok(l)
}

/// Duplication matrix `D_k` with `vec(A) = D_k vech(A)` for symmetric `A`.
pub fn duplication_matrix(k: usize) -> Result<DMatrix<f64>> {
    if k < 1 {
        return Err(Error::invalid("duplication matrix needs k >= 1"));
    }
    let m = k * (k + 1) / 2;
    let mut d = DMatrix::zeros(k * k, m);
    for j in 0..k {
        for i in 0..k {
            let (r, c) = if i >= j { (i, j) } else { (j, i) };
            d[(j * k + i, vech_index(r, c, k))] = 1.0;
        }
    }
    Ok(d)
}

/// Commutation matrix `K_{r,s}` with `K_{r,s} vec(Z) = vec(Z^T)` for `r x s` Z.
pub fn commutation_matrix(r: usize, s: usize) -> Result<DMatrix<f64>> {
    if r < 1 || s < 1 {
        return Err(Error::invalid("commutation matrix needs r, s >= 1"));
    }
    let mut k = DMatrix::zeros(r * s, r * s);
    for j in 0..s {
        for i in 0..r {
            // entry (i, j) of Z sits at vec position j*r + i and must land at
            // vec(Z^T) position i*s + j
            k[(i * s + j, j * r + i)] = 1.0;
        }
    }
    Ok(k)
}

/// Dense Kronecker product `A (x) B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for ja in 0..ac {
        for ia in 0..ar {
            let v = a[(ia, ja)];
            if v == 0.0 {
                continue;
            }
            for jb in 0..bc {
                for ib in 0..br {
                    out[(ia * br + ib, ja * bc + jb)] = v * b[(ib, jb)];
                }
            }
        }
    }
    out
}

/// `D_k^T vec(V)` without forming `D_k`: the vech-space gradient matching a
/// vec-space gradient of a function of a symmetric matrix.
pub fn duplication_t_vec(v: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = v.nrows();
    if v.ncols() != k {
        return Err(Error::invalid("duplication_t_vec expects a square matrix"));
    }
    let mut out = DVector::zeros(k * (k + 1) / 2);
    let mut idx = 0;
    for j in 0..k {
        for i in j..k {
            out[idx] = if i == j {
                v[(i, i)]
            } else {
                v[(i, j)] + v[(j, i)]
            };
            idx += 1;
        }
    }
    Ok(out)
}
