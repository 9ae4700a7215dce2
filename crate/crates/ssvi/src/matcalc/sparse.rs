//! Sparse lower-triangular factors over an explicit position mask.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Lower-triangular matrix whose nonzero pattern is a fixed mask. The mask
/// always contains the full diagonal, and values are stored row-major in
/// mask order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLowerTriangular {
    n: usize,
    positions: Vec<(usize, usize)>,
    values: Vec<f64>,
    row_start: Vec<usize>,
    diag_idx: Vec<usize>,
    /// Per column: (row, value index) pairs, rows ascending.
    cols: Vec<Vec<(usize, usize)>>,
}

impl SparseLowerTriangular {
    /// Builds the identity matrix on the given mask. Positions may be in any
    /// order and may contain duplicates; they are sorted row-major.
    pub fn identity_from_mask(n: usize, mask: &[(usize, usize)]) -> Result<Self> {
        let mut positions: Vec<(usize, usize)> = mask.to_vec();
        positions.sort_unstable();
        positions.dedup();
        for &(i, j) in &positions {
            if j > i || i >= n {
                return Err(Error::invalid(format!(
                    "mask entry ({i}, {j}) is not lower triangular within n={n}"
                )));
            }
        }
        let mut row_start = vec![0usize; n + 1];
        for &(i, _) in &positions {
            row_start[i + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        let mut diag_idx = vec![usize::MAX; n];
        let mut cols = vec![Vec::new(); n];
        for (idx, &(i, j)) in positions.iter().enumerate() {
            if i == j {
                diag_idx[i] = idx;
            }
            cols[j].push((i, idx));
        }
        for (i, &d) in diag_idx.iter().enumerate() {
            if d == usize::MAX {
                return Err(Error::invalid(format!(
                    "mask is missing diagonal entry ({i}, {i})"
                )));
            }
        }
        let mut values = vec![0.0; positions.len()];
        for i in 0..n {
            values[diag_idx[i]] = 1.0;
        }
        Ok(SparseLowerTriangular {
            n,
            positions,
            values,
            row_start,
            diag_idx,
            cols,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn set_values(&mut self, vals: &[f64]) -> Result<()> {
        if vals.len() != self.values.len() {
            return Err(Error::invalid("value slice length does not match mask"));
        }
        self.values.copy_from_slice(vals);
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_start[i];
        let hi = self.row_start[i + 1];
        match self.positions[lo..hi].binary_search(&(i, j)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.values[self.diag_idx[i]]
    }

    pub fn check_diagonal(&self) -> Result<()> {
        for i in 0..self.n {
            if self.diag(i) == 0.0 {
                return Err(Error::numerical(format!(
                    "zero diagonal entry at {i} in sparse factor"
                )));
            }
        }
        Ok(())
    }

    /// `y = L x`.
    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for idx in self.row_start[i]..self.row_start[i + 1] {
                s += self.values[idx] * x[self.positions[idx].1];
            }
            y[i] = s;
        }
        y
    }

    /// `y = L^T x`.
    pub fn matvec_t(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n);
        for i in 0..self.n {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for idx in self.row_start[i]..self.row_start[i + 1] {
                y[self.positions[idx].1] += self.values[idx] * xi;
            }
        }
        y
    }

    /// Forward substitution for `L x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_diagonal()?;
        let mut x = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut s = b[i];
            let mut diag = 0.0;
            for idx in self.row_start[i]..self.row_start[i + 1] {
                let j = self.positions[idx].1;
                if j == i {
                    diag = self.values[idx];
                } else {
                    s -= self.values[idx] * x[j];
                }
            }
            x[i] = s / diag;
        }
        Ok(x)
    }

    /// Back substitution for `L^T x = w`.
    pub fn solve_transposed(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_diagonal()?;
        let mut x = DVector::zeros(self.n);
        for j in (0..self.n).rev() {
            let mut s = w[j];
            let mut diag = 0.0;
            for &(i, idx) in &self.cols[j] {
                if i == j {
                    diag = self.values[idx];
                } else {
                    s -= self.values[idx] * x[i];
                }
            }
            x[j] = s / diag;
        }
        Ok(x)
    }

    pub fn log_abs_det(&self) -> Result<f64> {
        self.check_diagonal()?;
        Ok((0..self.n).map(|i| self.diag(i).abs().ln()).sum())
    }

    /// Entries of column `j` as (row, value) pairs.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.cols[j].iter().map(move |&(i, idx)| (i, self.values[idx]))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for (idx, &(i, j)) in self.positions.iter().enumerate() {
            a[(i, j)] = self.values[idx];
        }
        a
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_sparse(n: usize, extra: usize, rng: &mut StdRng) -> SparseLowerTriangular {
        let mut mask: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
        for _ in 0..extra {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..=i);
            mask.push((i, j));
        }
        let mut l = SparseLowerTriangular::identity_from_mask(n, &mask).unwrap();
        let vals: Vec<f64> = l
            .positions()
            .iter()
            .map(|&(i, j)| {
                if i == j {
                    1.0 + rng.gen_range(0.0..1.0)
                } else {
                    rng.gen_range(-0.5..0.5)
                }
            })
            .collect();
        l.set_values(&vals).unwrap();
        l
    }

    #[test]
    fn mask_requires_full_diagonal() {
        let mask = vec![(0, 0), (2, 1), (2, 2)];
        assert!(SparseLowerTriangular::identity_from_mask(3, &mask).is_err());
    }

    #[test]
    fn mask_rejects_upper_entries() {
        let mask = vec![(0, 0), (0, 1), (1, 1)];
        assert!(SparseLowerTriangular::identity_from_mask(2, &mask).is_err());
    }

    #[test]
    fn solves_match_dense() {
        let mut rng = StdRng::seed_from_u64(99);
        let l = random_sparse(12, 30, &mut rng);
        let b = DVector::from_fn(12, |_, _| rng.gen_range(-1.0..1.0));
        let dense = l.to_dense();

        let x = l.solve(&b).unwrap();
        assert!((&dense * &x - &b).norm() < 1e-12);

        let y = l.solve_transposed(&b).unwrap();
        assert!((dense.transpose() * &y - &b).norm() < 1e-12);

        assert!((l.matvec(&b) - &dense * &b).norm() < 1e-13);
        assert!((l.matvec_t(&b) - dense.transpose() * &b).norm() < 1e-13);
    }

    #[test]
    fn log_abs_det_is_sum_of_log_diags() {
        let mut rng = StdRng::seed_from_u64(2);
        let l = random_sparse(6, 8, &mut rng);
        let expect: f64 = (0..6).map(|i| l.diag(i).abs().ln()).sum();
        assert!((l.log_abs_det().unwrap() - expect).abs() < 1e-15);
    }
}
