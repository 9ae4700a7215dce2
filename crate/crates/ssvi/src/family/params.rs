//! The variational parameter object, its masks, and the matching gradient
//! and noise containers.

use super::layout::{FactorLayout, Structure};
use crate::error::{Error, Result};
use crate::matcalc::{BandedLowerTriangular, SparseLowerTriangular};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::ops::Range;

/// Precision Cholesky factor of the latent factors: a single band under
/// LR-S, a composite sparse pattern under LR-SA.
#[derive(Debug, Clone)]
pub enum StateChol {
    Banded(BandedLowerTriangular),
    Sparse(SparseLowerTriangular),
}

impl StateChol {
    pub fn dim(&self) -> usize {
        match self {
            StateChol::Banded(c) => c.dim(),
            StateChol::Sparse(c) => c.dim(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            StateChol::Banded(c) => c.nnz(),
            StateChol::Sparse(c) => c.nnz(),
        }
    }

    pub fn positions(&self) -> Vec<(usize, usize)> {
        match self {
            StateChol::Banded(c) => c.positions().collect(),
            StateChol::Sparse(c) => c.positions().to_vec(),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            StateChol::Banded(c) => c.values(),
            StateChol::Sparse(c) => c.values().to_vec(),
        }
    }

    pub fn set_values(&mut self, vals: &[f64]) -> Result<()> {
        match self {
            StateChol::Banded(c) => c.set_values(vals),
            StateChol::Sparse(c) => c.set_values(vals),
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            StateChol::Banded(c) => c.solve(b),
            StateChol::Sparse(c) => c.solve(b),
        }
    }

    pub fn solve_transposed(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            StateChol::Banded(c) => c.solve_transposed(b),
            StateChol::Sparse(c) => c.solve_transposed(b),
        }
    }

    pub fn matvec(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            StateChol::Banded(c) => c.matvec(x),
            StateChol::Sparse(c) => c.matvec(x),
        }
    }

    pub fn matvec_t(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            StateChol::Banded(c) => c.matvec_t(x),
            StateChol::Sparse(c) => c.matvec_t(x),
        }
    }

    pub fn log_abs_det(&self) -> Result<f64> {
        match self {
            StateChol::Banded(c) => c.log_abs_det(),
            StateChol::Sparse(c) => c.log_abs_det(),
        }
    }

    pub fn check_diagonal(&self) -> Result<()> {
        match self {
            StateChol::Banded(c) => c.check_diagonal(),
            StateChol::Sparse(c) => c.check_diagonal(),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            StateChol::Banded(c) => c.to_dense(),
            StateChol::Sparse(c) => c.to_dense(),
        }
    }

    /// Entries of column `j` as (row, value) pairs.
    pub fn column_entries(&self, j: usize) -> Vec<(usize, f64)> {
        match self {
            StateChol::Banded(c) => {
                let n = c.dim();
                (0..=c.bandwidth().min(n - 1 - j))
                    .map(|d| (j + d, c.get(j + d, j)))
                    .collect()
            }
            StateChol::Sparse(c) => c.column(j).collect(),
        }
    }
}

/// Sparsity mask of the factor Cholesky under LR-SA: chain 1 keeps its band,
/// chain 2 gets per-time triangular diagonal blocks, and each chain-2 time
/// couples to the matching chain-1 time through a triangular cross block.
pub fn lr_sa_c1_mask(layout: &FactorLayout) -> Result<Vec<(usize, usize)>> {
    let c = layout.chain;
    let c2 = layout
        .chain2
        .ok_or_else(|| Error::invalid("LR-SA mask requested for an LR-S layout"))?;
    let n1 = c.factor_len();
    let mut mask = Vec::new();
    for j in 0..n1 {
        for d in 0..=c.q.min(n1 - 1 - j) {
            mask.push((j + d, j));
        }
    }
    if c2.n_states > 0 && c2.q > 0 {
        if c2.n_states > c.n_states {
            return Err(Error::invalid(
                "second chain cannot have more time blocks than the first",
            ));
        }
        let align = c.n_states - c2.n_states;
        for t in 0..c2.n_states {
            let roff = n1 + t * c2.q;
            for jj in 0..c2.q {
                for ii in jj..c2.q {
                    mask.push((roff + ii, roff + jj));
                }
            }
            // lower-triangular q x q coupling to the matching chain-1 time
            let coff = (t + align) * c.q;
            for jj in 0..c.q {
                for ii in jj..c2.q {
                    mask.push((roff + ii, coff + jj));
                }
            }
        }
    }
    mask.sort_unstable();
    mask.dedup();
    Ok(mask)
}

/// The variational parameters `(mu, B, delta, C1, C2)`.
#[derive(Debug, Clone)]
pub struct VariationalParams {
    pub mu: DVector<f64>,
    /// Loading matrices, one per chain, upper triangle pinned to zero.
    pub b: Vec<DMatrix<f64>>,
    /// Stacked diagonals of the per-time noise matrices `D_t`.
    pub delta: DVector<f64>,
    pub c1: StateChol,
    pub c2: SparseLowerTriangular,
}

/// Scalar ranges of the flattened parameter vector, in the update order of
/// the optimizer: mu, B, delta, C (C1 and C2 jointly).
#[derive(Debug, Clone)]
pub struct BlockRanges {
    pub mu: Range<usize>,
    pub b: Range<usize>,
    pub delta: Range<usize>,
    pub c: Range<usize>,
}

impl BlockRanges {
    pub fn total(&self) -> usize {
        self.c.end
    }
}

impl VariationalParams {
    /// Initializes `B` and `C` as unit diagonals, `mu = 0`, `delta = 1`.
    pub fn init(layout: &FactorLayout, c2_mask: &[(usize, usize)]) -> Result<Self> {
        layout.validate()?;
        let b = layout
            .chains()
            .iter()
            .map(|c| DMatrix::from_fn(c.p, c.q, |i, j| if i == j { 1.0 } else { 0.0 }))
            .collect();
        let c1 = match layout.structure() {
            Structure::LrS => StateChol::Banded(BandedLowerTriangular::identity(
                layout.chain.factor_len(),
                layout.chain.q,
            )),
            Structure::LrSa => {
                let mask = lr_sa_c1_mask(layout)?;
                StateChol::Sparse(SparseLowerTriangular::identity_from_mask(
                    layout.factor_len(),
                    &mask,
                )?)
            }
        };
        let c2 = SparseLowerTriangular::identity_from_mask(layout.zeta, c2_mask)?;
        Ok(VariationalParams {
            mu: DVector::zeros(layout.mu_len()),
            b,
            delta: DVector::from_element(layout.state_len(), 1.0),
            c1,
            c2,
        })
    }

    /// Checks shapes, masks and diagonal nonzeroness against the layout.
    pub fn validate(&self, layout: &FactorLayout) -> Result<()> {
        let chains = layout.chains();
        if self.mu.len() != layout.mu_len() {
            return Err(Error::invalid("mu length does not match layout"));
        }
        if self.b.len() != chains.len() {
            return Err(Error::invalid("number of loading matrices mismatch"));
        }
        for (bm, c) in self.b.iter().zip(&chains) {
            if bm.nrows() != c.p || bm.ncols() != c.q {
                return Err(Error::invalid("loading matrix shape mismatch"));
            }
            for j in 1..c.q {
                for i in 0..j.min(c.p) {
                    if bm[(i, j)] != 0.0 {
                        return Err(Error::invalid(format!(
                            "loading matrix breaks the identifiability mask at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        if self.delta.len() != layout.state_len() {
            return Err(Error::invalid("delta length does not match layout"));
        }
        if self.c1.dim() != layout.factor_len() || self.c2.dim() != layout.zeta {
            return Err(Error::invalid("factor Cholesky dimensions mismatch"));
        }
        self.c1.check_diagonal()?;
        if layout.zeta > 0 {
            self.c2.check_diagonal()?;
        }
        Ok(())
    }

    /// Number of free scalars in each block, flattened in optimizer order.
    pub fn block_ranges(&self) -> BlockRanges {
        let n_mu = self.mu.len();
        let n_b: usize = self
            .b
            .iter()
            .map(|b| b.ncols() * b.nrows() - b.ncols() * (b.ncols() - 1) / 2)
            .sum();
        let n_d = self.delta.len();
        let n_c = self.c1.nnz() + self.c2.nnz();
        BlockRanges {
            mu: 0..n_mu,
            b: n_mu..n_mu + n_b,
            delta: n_mu + n_b..n_mu + n_b + n_d,
            c: n_mu + n_b + n_d..n_mu + n_b + n_d + n_c,
        }
    }

    /// Flattens the free parameters: mu, masked B column-major per chain,
    /// delta, C1 values, C2 values.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.block_ranges().total());
        out.extend(self.mu.iter());
        for b in &self.b {
            for j in 0..b.ncols() {
                for i in j..b.nrows() {
                    out.push(b[(i, j)]);
                }
            }
        }
        out.extend(self.delta.iter());
        out.extend(self.c1.values());
        out.extend(self.c2.values());
        out
    }

    /// Writes back a flat vector produced by [`to_flat`](Self::to_flat).
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let ranges = self.block_ranges();
        if flat.len() != ranges.total() {
            return Err(Error::invalid("flat parameter length mismatch"));
        }
        let mut idx = 0;
        for v in self.mu.iter_mut() {
            *v = flat[idx];
            idx += 1;
        }
        for b in &mut self.b {
            for j in 0..b.ncols() {
                for i in j..b.nrows() {
                    b[(i, j)] = flat[idx];
                    idx += 1;
                }
            }
        }
        for v in self.delta.iter_mut() {
            *v = flat[idx];
            idx += 1;
        }
        let n1 = self.c1.nnz();
        self.c1.set_values(&flat[idx..idx + n1])?;
        idx += n1;
        self.c2.set_values(&flat[idx..])?;
        Ok(())
    }

    /// Perturbs all free parameters randomly while keeping masks valid and
    /// diagonals away from zero. Intended for tests.
    pub fn randomize<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        for v in self.mu.iter_mut() {
            *v += scale * rng.gen_range(-1.0..1.0);
        }
        for b in &mut self.b {
            for j in 0..b.ncols() {
                for i in j..b.nrows() {
                    b[(i, j)] += scale * rng.gen_range(-1.0..1.0);
                }
            }
        }
        for v in self.delta.iter_mut() {
            *v = 0.6 + 0.4 * rng.gen_range(0.0..1.0) + scale * 0.1 * rng.gen_range(0.0..1.0);
        }
        for fac in [true, false] {
            let positions;
            let mut vals;
            if fac {
                positions = self.c1.positions();
                vals = self.c1.values();
            } else {
                positions = self.c2.positions().to_vec();
                vals = self.c2.values().to_vec();
            }
            for (v, (i, j)) in vals.iter_mut().zip(&positions) {
                if i == j {
                    *v = 1.0 + 0.5 * scale * rng.gen_range(0.0..1.0);
                } else {
                    *v = 0.5 * scale * rng.gen_range(-1.0..1.0);
                }
            }
            if fac {
                self.c1.set_values(&vals).unwrap();
            } else {
                self.c2.set_values(&vals).unwrap();
            }
        }
    }
}

/// Gradients with the same shapes and masks as [`VariationalParams`].
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub mu: DVector<f64>,
    pub b: Vec<DMatrix<f64>>,
    pub delta: DVector<f64>,
    /// Aligned to the position order of the parameter's `c1`.
    pub c1: Vec<f64>,
    /// Aligned to the mask order of the parameter's `c2`.
    pub c2: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(par: &VariationalParams) -> Self {
        GradientSet {
            mu: DVector::zeros(par.mu.len()),
            b: par
                .b
                .iter()
                .map(|b| DMatrix::zeros(b.nrows(), b.ncols()))
                .collect(),
            delta: DVector::zeros(par.delta.len()),
            c1: vec![0.0; par.c1.nnz()],
            c2: vec![0.0; par.c2.nnz()],
        }
    }

    /// Flattens in the same order as [`VariationalParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend(self.mu.iter());
        for b in &self.b {
            for j in 0..b.ncols() {
                for i in j..b.nrows() {
                    out.push(b[(i, j)]);
                }
            }
        }
        out.extend(self.delta.iter());
        out.extend(self.c1.iter());
        out.extend(self.c2.iter());
        out
    }

    pub fn axpy(&mut self, a: f64, other: &GradientSet) {
        self.mu.axpy(a, &other.mu, 1.0);
        for (b, ob) in self.b.iter_mut().zip(&other.b) {
            *b += ob * a;
        }
        self.delta.axpy(a, &other.delta, 1.0);
        for (v, o) in self.c1.iter_mut().zip(&other.c1) {
            *v += a * o;
        }
        for (v, o) in self.c2.iter_mut().zip(&other.c2) {
            *v += a * o;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.mu *= a;
        for b in &mut self.b {
            *b *= a;
        }
        self.delta *= a;
        for v in &mut self.c1 {
            *v *= a;
        }
        for v in &mut self.c2 {
            *v *= a;
        }
    }

    /// Euclidean norms of the four update blocks (mu, B, delta, C).
    pub fn block_norms(&self) -> [f64; 4] {
        let b: f64 = self.b.iter().map(|m| m.norm_squared()).sum();
        let c: f64 = self.c1.iter().chain(self.c2.iter()).map(|v| v * v).sum();
        [self.mu.norm(), b.sqrt(), self.delta.norm(), c.sqrt()]
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The base randomness of the reparametrization trick.
#[derive(Debug, Clone)]
pub struct NoiseDraw {
    /// Standard normal, length `dim(rho)`.
    pub omega: DVector<f64>,
    /// Standard normal, length of the stacked states.
    pub eps: DVector<f64>,
}

impl NoiseDraw {
    pub fn sample<R: Rng>(layout: &FactorLayout, rng: &mut R) -> Self {
        NoiseDraw {
            omega: DVector::from_fn(layout.rho_len(), |_, _| rng.sample(StandardNormal)),
            eps: DVector::from_fn(layout.state_len(), |_, _| rng.sample(StandardNormal)),
        }
    }

    pub fn zeros(layout: &FactorLayout) -> Self {
        NoiseDraw {
            omega: DVector::zeros(layout.rho_len()),
            eps: DVector::zeros(layout.state_len()),
        }
    }

    pub fn matches(&self, layout: &FactorLayout) -> Result<()> {
        if self.omega.len() != layout.rho_len() || self.eps.len() != layout.state_len() {
            return Err(Error::invalid("noise draw lengths do not match layout"));
        }
        Ok(())
    }
}
