//! Symmetric eigendecompositions and fractional matrix-power derivatives.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative eigenvalue gap below which the matrix-power derivative is
/// rejected: the Moore-Penrose term is undefined at exact ties and
/// ill-conditioned near them.
pub const EIGEN_GAP_THRESHOLD: f64 = 1e-8;

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl SymEigen {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `P f(L) P^T` for an elementwise eigenvalue map `f`.
    pub fn map_powers(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let k = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..k {
            let s = f(self.values[j]);
            for i in 0..k {
                scaled[(i, j)] *= s;
            }
        }
        &scaled * self.vectors.transpose()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map_powers(|l| l)
    }
}

/// Eigendecomposition of a symmetric matrix; fails if the input is not
/// numerically symmetric or the decomposition does not reconstruct it.
pub fn sym_eigen(a: &DMatrix<f64>) -> Result<SymEigen> {
    let k = a.nrows();
    if a.ncols() != k || k == 0 {
        return Err(Error::invalid("sym_eigen expects a nonempty square matrix"));
    }
    let scale = a.amax().max(1e-300);
    for i in 0..k {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-8 * scale {
                return Err(Error::invalid("sym_eigen expects a symmetric matrix"));
            }
        }
    }
    let sym = nalgebra::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| {
        sym.eigenvalues[j]
            .partial_cmp(&sym.eigenvalues[i])
            .expect("non-finite eigenvalue")
    });
    let values = DVector::from_fn(k, |i, _| sym.eigenvalues[order[i]]);
    let mut vectors = DMatrix::zeros(k, k);
    for (col, &src) in order.iter().enumerate() {
        vectors.set_column(col, &sym.eigenvectors.column(src));
    }
    let eig = SymEigen { values, vectors };
    let resid = (eig.reconstruct() - a).norm() / scale.max(1.0);
    if resid > 1e-10 {
        return Err(Error::numerical(format!(
            "eigendecomposition residual {resid:e} too large"
        )));
    }
    let ortho = (eig.vectors.transpose() * &eig.vectors - DMatrix::<f64>::identity(k, k)).norm();
    if ortho > 1e-10 {
        return Err(Error::numerical(format!(
            "eigenvectors not orthonormal, defect {ortho:e}"
        )));
    }
    Ok(eig)
}

/// `Sigma^{-d} = P L^{-d} P^T` for a symmetric positive definite matrix,
/// returning the eigendecomposition for reuse by the derivative.
pub fn matrix_power_neg_d(sigma: &DMatrix<f64>, d: f64) -> Result<(DMatrix<f64>, SymEigen)> {
    let eig = sym_eigen(sigma)?;
    if eig.values[eig.dim() - 1] <= 0.0 {
        return Err(Error::numerical(format!(
            "matrix_power_neg_d needs an SPD input, min eigenvalue {:e}",
            eig.values[eig.dim() - 1]
        )));
    }
    let power = eig.map_powers(|l| l.powf(-d));
    Ok((power, eig))
}

/// Derivative `d Sigma^{-d} / d Sigma` as a `k^2 x k^2` matrix, assembled
/// from the eigendecomposition. Requires all eigenvalue gaps to exceed
/// `EIGEN_GAP_THRESHOLD * lambda_max`.
pub fn d_matrix_power_neg_d(eig: &SymEigen, d: f64) -> Result<DMatrix<f64>> {
    let k = eig.dim();
    let lmax = eig.values[0].abs();
    for i in 1..k {
        let gap = (eig.values[i - 1] - eig.values[i]).abs();
        if gap < EIGEN_GAP_THRESHOLD * lmax {
            return Err(Error::numerical(format!(
                "eigenvalue gap {gap:e} below threshold for matrix-power derivative"
            )));
        }
    }
    let sigma = eig.reconstruct();
    let identity = DMatrix::<f64>::identity(k, k);
    let mut out = DMatrix::zeros(k * k, k * k);
    for i in 0..k {
        let li = eig.values[i];
        let p_i = eig.vectors.column(i).clone_owned();
        let pp = &p_i * p_i.transpose();
        let vec_pp = DVector::from_column_slice(pp.as_slice());

        // eigenvalue term: -d l_i^{-d-1} vec(p p^T) vec(p p^T)^T
        let c = -d * li.powf(-d - 1.0);
        for b in 0..k * k {
            for a in 0..k * k {
                out[(a, b)] += c * vec_pp[a] * vec_pp[b];
            }
        }

        // eigenvector term: l_i^{-d} (p (x) I + I (x) p)(p^T (x) (l_i I - Sigma)^-)
        let mut pinv = DMatrix::zeros(k, k);
        for j in 0..k {
            if j == i {
                continue;
            }
            let w = 1.0 / (li - eig.values[j]);
            let p_j = eig.vectors.column(j).clone_owned();
            pinv += w * &p_j * p_j.transpose();
        }
        let p_mat = DMatrix::from_column_slice(k, 1, p_i.as_slice());
        let left = kron_mat(&p_mat, &identity) + kron_mat(&identity, &p_mat);
        let right = kron_mat(&p_mat.transpose(), &pinv);
        out += li.powf(-d) * left * right;
        let _ = &sigma;
    }
    Ok(out)
}

fn kron_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    super::kron(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(k: usize, rng: &mut StdRng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::<f64>::identity(k, k) * (k as f64)
    }

    #[test]
    fn diagonal_case_is_elementwise_power() {
        let sigma = dmatrix![4.0, 0.0; 0.0, 1.0];
        let (p, _) = matrix_power_neg_d(&sigma, 0.5).unwrap();
        assert!((p - dmatrix![0.5, 0.0; 0.0, 1.0]).norm() < 1e-12);
    }

    #[test]
    fn d_zero_gives_identity_and_d_one_gives_inverse() {
        let mut rng = StdRng::seed_from_u64(10);
        let sigma = random_spd(3, &mut rng);
        let (p0, _) = matrix_power_neg_d(&sigma, 0.0).unwrap();
        assert!((p0 - DMatrix::<f64>::identity(3, 3)).norm() < 1e-10);
        let (p1, _) = matrix_power_neg_d(&sigma, 1.0).unwrap();
        let inv = sigma.clone().try_inverse().unwrap();
        assert!((p1 - inv).norm() < 1e-9);
    }

    #[test]
    fn rejects_non_spd() {
        let sigma = dmatrix![1.0, 0.0; 0.0, -2.0];
        assert!(matrix_power_neg_d(&sigma, 0.5).is_err());
    }

    #[test]
    fn scalar_derivative_matches_calculus() {
        let sigma = dmatrix![2.5];
        let d = 0.7;
        let (_, eig) = matrix_power_neg_d(&sigma, d).unwrap();
        let deriv = d_matrix_power_neg_d(&eig, d).unwrap();
        let expect = -d * 2.5_f64.powf(-d - 1.0);
        assert!((deriv[(0, 0)] - expect).abs() < 1e-12);
    }

    #[test]
    fn derivative_matches_symmetric_finite_differences() {
        let mut rng = StdRng::seed_from_u64(77);
        for k in [2usize, 3, 4] {
            let sigma = random_spd(k, &mut rng);
            let d = 0.3;
            let (_, eig) = matrix_power_neg_d(&sigma, d).unwrap();
            let deriv = d_matrix_power_neg_d(&eig, d).unwrap();
            let h = 1e-5;
            for _ in 0..4 {
                let s_raw = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
                let s = (&s_raw + s_raw.transpose()) * 0.5;
                let (fp, _) = matrix_power_neg_d(&(&sigma + &s * h), d).unwrap();
                let (fm, _) = matrix_power_neg_d(&(&sigma - &s * h), d).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                let lin = &deriv * DVector::from_column_slice(s.as_slice());
                let fd_vec = DVector::from_column_slice(fd.as_slice());
                let rel = (&lin - &fd_vec).norm() / fd_vec.norm().max(1e-12);
                assert!(rel < 1e-6, "k={k} rel err {rel:e}");
            }
        }
    }

    #[test]
    fn degenerate_eigenvalues_are_rejected() {
        let sigma = DMatrix::<f64>::identity(3, 3) * 2.0;
        let (_, eig) = matrix_power_neg_d(&sigma, 0.5).unwrap();
        assert!(d_matrix_power_neg_d(&eig, 0.5).is_err());
    }

    #[test]
    fn eigen_sorted_descending() {
        let mut rng = StdRng::seed_from_u64(4);
        let sigma = random_spd(5, &mut rng);
        let eig = sym_eigen(&sigma).unwrap();
        for i in 1..5 {
            assert!(eig.values[i - 1] >= eig.values[i]);
        }
    }
}
