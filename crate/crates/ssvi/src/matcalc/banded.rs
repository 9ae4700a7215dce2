//! Banded lower-triangular factors and symmetric banded matrices.
//!
//! Storage is packed by diagonal: band `d` holds the entries `(j + d, j)` for
//! `j = 0..n-d`, so every operation on a factor with `bw` subdiagonals costs
//! `O(n * bw)`.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Lower-triangular matrix with a fixed number of subdiagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedLowerTriangular {
    n: usize,
    bw: usize,
    /// `bands[d][j]` is entry `(j + d, j)`; `bands[d]` has length `n - d`.
    bands: Vec<Vec<f64>>,
}

impl BandedLowerTriangular {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        let bands = (0..=bw).map(|d| vec![0.0; n - d]).collect();
        BandedLowerTriangular { n, bw, bands }
    }

    pub fn identity(n: usize, bw: usize) -> Self {
        let mut c = Self::zeros(n, bw);
        for j in 0..n {
            c.bands[0][j] = 1.0;
        }
        c
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.bands.iter().map(|b| b.len()).sum()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i >= j && i - j <= self.bw {
            self.bands[i - j][j]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) -> Result<()> {
        if i < j || i - j > self.bw || i >= self.n {
            return Err(Error::invalid(format!(
                "({i}, {j}) is outside the band (n={}, bw={})",
                self.n, self.bw
            )));
        }
        self.bands[i - j][j] = v;
        Ok(())
    }

    /// Stored positions in column-major order. All value slices produced by
    /// [`values`](Self::values) follow this order.
    pub fn positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |j| {
            (0..=self.bw.min(self.n - 1 - j)).map(move |d| (j + d, j))
        })
    }

    pub fn values(&self) -> Vec<f64> {
        self.positions().map(|(i, j)| self.bands[i - j][j]).collect()
    }

    pub fn set_values(&mut self, vals: &[f64]) -> Result<()> {
        if vals.len() != self.nnz() {
            return Err(Error::invalid("value slice length does not match band"));
        }
        let positions: Vec<_> = self.positions().collect();
        for (&(i, j), &v) in positions.iter().zip(vals) {
            self.bands[i - j][j] = v;
        }
        Ok(())
    }

    pub fn check_diagonal(&self) -> Result<()> {
        for j in 0..self.n {
            if self.bands[0][j] == 0.0 {
                return Err(Error::numerical(format!(
                    "zero diagonal entry at {j} in banded factor"
                )));
            }
        }
        Ok(())
    }

    /// `y = C x`.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for d in 0..=self.bw.min(i) {
                s += self.bands[d][i - d] * x[i - d];
            }
            y[i] = s;
        }
        y
    }

    /// `y = C^T x`.
    pub fn matvec_t(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for j in 0..self.n {
            let mut s = 0.0;
            for d in 0..=self.bw.min(self.n - 1 - j) {
                s += self.bands[d][j] * x[j + d];
            }
            y[j] = s;
        }
        y
    }

    /// Forward substitution for `C x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_diagonal()?;
        let mut x = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut s = b[i];
            for d in 1..=self.bw.min(i) {
                s -= self.bands[d][i - d] * x[i - d];
            }
            x[i] = s / self.bands[0][i];
        }
        Ok(x)
    }

    /// Back substitution for `C^T x = w`.
    pub fn solve_transposed(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_diagonal()?;
        let mut x = DVector::zeros(self.n);
        for j in (0..self.n).rev() {
            let mut s = w[j];
            for d in 1..=self.bw.min(self.n - 1 - j) {
                s -= self.bands[d][j] * x[j + d];
            }
            x[j] = s / self.bands[0][j];
        }
        Ok(x)
    }

    /// `sum_i log |C_ii|`.
    pub fn log_abs_det(&self) -> Result<f64> {
        self.check_diagonal()?;
        Ok(self.bands[0].iter().map(|v| v.abs().ln()).sum())
    }

    /// `Omega = C C^T`, a symmetric matrix with the same bandwidth.
    pub fn mul_self_transpose(&self) -> SymmetricBanded {
        let mut omega = SymmetricBanded::zeros(self.n, self.bw);
        for j in 0..self.n {
            for d in 0..=self.bw.min(self.n - 1 - j) {
                let i = j + d;
                // sum over columns m <= j reachable from row i
                let lo = i.saturating_sub(self.bw);
                let mut s = 0.0;
                for m in lo..=j {
                    s += self.get(i, m) * self.get(j, m);
                }
                omega.bands[d][j] = s;
            }
        }
        omega
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (i, j) in self.positions() {
            a[(i, j)] = self.bands[i - j][j];
        }
        a
    }

    pub fn from_dense(a: &DMatrix<f64>, bw: usize) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid("from_dense expects a square matrix"));
        }
        let mut c = Self::zeros(n, bw);
        for j in 0..n {
            for i in 0..n {
                let v = a[(i, j)];
                if v != 0.0 {
                    if i < j || i - j > c.bw {
                        return Err(Error::invalid(format!(
                            "dense matrix has entry outside band at ({i}, {j})"
                        )));
                    }
                    c.bands[i - j][j] = v;
                }
            }
        }
        Ok(c)
    }
}

/// Symmetric banded matrix, lower bands stored.
#[derive(Debug, Clone)]
pub struct SymmetricBanded {
    n: usize,
    bw: usize,
    bands: Vec<Vec<f64>>,
}

impl SymmetricBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        let bw = bw.min(n.saturating_sub(1));
        let bands = (0..=bw).map(|d| vec![0.0; n - d]).collect();
        SymmetricBanded { n, bw, bands }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        if hi - lo <= self.bw {
            self.bands[hi - lo][lo]
        } else {
            0.0
        }
    }

    /// Adds a dense symmetric block at diagonal offset `off`; the block must
    /// fit inside the band.
    pub fn add_block(&mut self, off: usize, block: &DMatrix<f64>) -> Result<()> {
        let q = block.nrows();
        if block.ncols() != q || off + q > self.n || q > self.bw + 1 {
            return Err(Error::invalid("block does not fit inside the band"));
        }
        for j in 0..q {
            for i in j..q {
                self.bands[i - j][off + j] += block[(i, j)];
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for d in 0..=self.bw.min(self.n - 1 - j) {
                a[(j + d, j)] = self.bands[d][j];
                a[(j, j + d)] = self.bands[d][j];
            }
        }
        a
    }
}

/// Cholesky factorization of a symmetric positive-definite banded matrix;
/// the factor keeps the bandwidth.
pub fn banded_cholesky(a: &SymmetricBanded) -> Result<BandedLowerTriangular> {
    let n = a.n;
    let bw = a.bw;
    let mut l = BandedLowerTriangular::zeros(n, bw);
    for j in 0..n {
        let lo = j.saturating_sub(bw);
        let mut s = a.bands[0][j];
        for m in lo..j {
            let v = l.get(j, m);
            s -= v * v;
        }
        if s <= 0.0 || !s.is_finite() {
            return Err(Error::numerical(format!(
                "banded Cholesky pivot {s:e} at column {j} is not positive"
            )));
        }
        let diag = s.sqrt();
        l.bands[0][j] = diag;
        for i in (j + 1)..n.min(j + bw + 1) {
            let lo_i = i.saturating_sub(bw);
            let start = lo.max(lo_i);
            let mut s = a.get(i, j);
            for m in start..j {
                s -= l.get(i, m) * l.get(j, m);
            }
            l.bands[i - j][j] = s / diag;
        }
    }
    Ok(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_banded(n: usize, bw: usize, rng: &mut StdRng) -> BandedLowerTriangular {
        let mut c = BandedLowerTriangular::zeros(n, bw);
        for j in 0..n {
            for d in 0..=bw.min(n - 1 - j) {
                let v = if d == 0 {
                    1.0 + rng.gen_range(0.0..1.0)
                } else {
                    rng.gen_range(-0.5..0.5)
                };
                c.set(j + d, j, v).unwrap();
            }
        }
        c
    }

    #[test]
    fn solve_transposed_identity_returns_input() {
        let c = BandedLowerTriangular::identity(6, 2);
        let w = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0, -1.0, 4.0]);
        assert_eq!(c.solve_transposed(&w).unwrap(), w);
    }

    #[test]
    fn solve_transposed_matches_dense() {
        let mut rng = StdRng::seed_from_u64(42);
        let c = random_banded(8, 2, &mut rng);
        let w = DVector::from_fn(8, |_, _| rng.gen_range(-1.0..1.0));
        let x = c.solve_transposed(&w).unwrap();
        let dense = c.to_dense();
        let x_dense = dense.transpose().lu().solve(&w).unwrap();
        assert!((&x - &x_dense).norm() < 1e-12);
        // composition C^T . x recovers w
        let resid = c.matvec_t(&x) - &w;
        assert!(resid.amax() <= 1e-12 * w.amax());
    }

    #[test]
    fn forward_solve_matches_dense() {
        let mut rng = StdRng::seed_from_u64(1);
        let c = random_banded(10, 3, &mut rng);
        let b = DVector::from_fn(10, |_, _| rng.gen_range(-1.0..1.0));
        let x = c.solve(&b).unwrap();
        let x_dense = c.to_dense().lu().solve(&b).unwrap();
        assert!((&x - &x_dense).norm() < 1e-12);
    }

    #[test]
    fn zero_diagonal_is_rejected() {
        let mut c = BandedLowerTriangular::identity(3, 1);
        c.set(1, 1, 0.0).unwrap();
        assert!(c.solve(&DVector::zeros(3)).is_err());
        assert!(c.log_abs_det().is_err());
    }

    #[test]
    fn matvec_agrees_with_dense() {
        let mut rng = StdRng::seed_from_u64(5);
        let c = random_banded(9, 2, &mut rng);
        let x = DVector::from_fn(9, |_, _| rng.gen_range(-1.0..1.0));
        let dense = c.to_dense();
        assert!((c.matvec(&x) - &dense * &x).norm() < 1e-13);
        assert!((c.matvec_t(&x) - dense.transpose() * &x).norm() < 1e-13);
    }

    #[test]
    fn mul_self_transpose_matches_dense() {
        let mut rng = StdRng::seed_from_u64(8);
        let c = random_banded(12, 3, &mut rng);
        let omega = c.mul_self_transpose();
        let dense = c.to_dense();
        let expect = &dense * dense.transpose();
        assert!((omega.to_dense() - expect).norm() < 1e-12);
    }

    #[test]
    fn banded_cholesky_matches_dense_cholesky() {
        let mut rng = StdRng::seed_from_u64(13);
        let c = random_banded(15, 3, &mut rng);
        let omega = c.mul_self_transpose();
        let l = banded_cholesky(&omega).unwrap();
        let dense_chol = omega.to_dense().cholesky().unwrap();
        assert!((l.to_dense() - dense_chol.l()).norm() < 1e-10);
    }

    #[test]
    fn banded_cholesky_rejects_indefinite() {
        let mut a = SymmetricBanded::zeros(3, 1);
        a.bands[0][0] = -1.0;
        assert!(banded_cholesky(&a).is_err());
    }

    #[test]
    fn values_roundtrip_in_position_order() {
        let mut rng = StdRng::seed_from_u64(3);
        let c = random_banded(7, 2, &mut rng);
        let vals = c.values();
        assert_eq!(vals.len(), c.nnz());
        let mut c2 = BandedLowerTriangular::zeros(7, 2);
        c2.set_values(&vals).unwrap();
        assert_eq!(c, c2);
    }
}
