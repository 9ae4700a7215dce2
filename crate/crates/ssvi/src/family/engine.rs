//! The dynamic-factor Gaussian family: reparametrized sampling, log-density
//! evaluation, ELBO estimation, and the two unbiased gradient estimators.
//!
//! The factor part of the covariance never materializes the Kronecker-sized
//! objects of the gradient formulas: loading matrices act block-wise per
//! time, the factor precision factor acts through banded or sparse solves,
//! and inversions of the state covariance `W1 Sigma1 W1^T + D^2` go through
//! the inner matrix `G = C1 C1^T + W1^T D^{-2} W1`, which keeps the band
//! structure of `C1` under LR-S because `W1^T D^{-2} W1` is block diagonal.

use super::layout::{FactorLayout, MeanMode};
use super::params::{GradientSet, NoiseDraw, StateChol, VariationalParams};
use crate::error::{Error, Result};
use crate::matcalc::{banded_cholesky, BandedLowerTriangular};
use crate::model::Model;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

/// Which of the two unbiased gradient estimators to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// All terms of the pathwise gradient.
    Standard,
    /// The form that drops score terms with zero expectation and vanishes
    /// sample-wise at an exact fit.
    Roeder,
}

/// One time block of the factor structure.
#[derive(Debug, Clone, Copy)]
pub struct Block {
    pub chain: usize,
    pub x_off: usize,
    pub p: usize,
    pub z_off: usize,
    pub q: usize,
}

pub fn blocks(layout: &FactorLayout) -> Vec<Block> {
    let mut out = Vec::new();
    let mut x_off = 0;
    let mut z_off = 0;
    for (ci, c) in layout.chains().iter().enumerate() {
        for _ in 0..c.n_states {
            out.push(Block {
                chain: ci,
                x_off,
                p: c.p,
                z_off,
                q: c.q,
            });
            x_off += c.p;
            z_off += c.q;
        }
    }
    out
}

enum GFactor {
    Banded(BandedLowerTriangular),
    Dense(Box<Cholesky<f64, Dyn>>),
}

impl GFactor {
    fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            GFactor::Banded(l) => l.solve_transposed(&l.solve(b)?),
            GFactor::Dense(c) => Ok(c.solve(b)),
        }
    }

    fn log_det(&self) -> Result<f64> {
        match self {
            GFactor::Banded(l) => Ok(2.0 * l.log_abs_det()?),
            GFactor::Dense(c) => {
                let mut s = 0.0;
                for i in 0..c.l_dirty().nrows() {
                    s += c.l_dirty()[(i, i)].ln();
                }
                Ok(2.0 * s)
            }
        }
    }
}

/// Evaluation engine for one fixed set of variational parameters.
pub struct Family<'a> {
    pub layout: &'a FactorLayout,
    pub par: &'a VariationalParams,
    blocks: Vec<Block>,
    /// Per-block `B_c^T D_t^{-2} B_c`.
    f_blocks: Vec<DMatrix<f64>>,
    g_fact: GFactor,
    logdet_state: f64,
    logdet_zeta: f64,
}

impl<'a> Family<'a> {
    pub fn new(layout: &'a FactorLayout, par: &'a VariationalParams) -> Result<Self> {
        par.validate(layout)?;
        let blocks = blocks(layout);

        let mut f_blocks = Vec::with_capacity(blocks.len());
        for bl in &blocks {
            let b = &par.b[bl.chain];
            let mut f = DMatrix::zeros(bl.q, bl.q);
            for r in 0..bl.p {
                let w = 1.0 / (par.delta[bl.x_off + r] * par.delta[bl.x_off + r]);
                for j in 0..bl.q {
                    let bj = b[(r, j)];
                    if bj == 0.0 {
                        continue;
                    }
                    for i in 0..bl.q {
                        f[(i, j)] += w * b[(r, i)] * bj;
                    }
                }
            }
            f_blocks.push(f);
        }

        let g_fact = match &par.c1 {
            StateChol::Banded(c1) => {
                let mut g = c1.mul_self_transpose();
                for (bi, bl) in blocks.iter().enumerate() {
                    g.add_block(bl.z_off, &f_blocks[bi])?;
                }
                GFactor::Banded(banded_cholesky(&g)?)
            }
            StateChol::Sparse(c1) => {
                let dense = c1.to_dense();
                let mut g = &dense * dense.transpose();
                for (bi, bl) in blocks.iter().enumerate() {
                    for j in 0..bl.q {
                        for i in 0..bl.q {
                            g[(bl.z_off + i, bl.z_off + j)] += f_blocks[bi][(i, j)];
                        }
                    }
                }
                let chol = Cholesky::new(g).ok_or_else(|| {
                    Error::numerical("inner matrix G is not positive definite")
                })?;
                GFactor::Dense(Box::new(chol))
            }
        };

        let logdet_g = g_fact.log_det()?;
        let logdet_c1 = par.c1.log_abs_det()?;
        let logdet_d2: f64 = par.delta.iter().map(|d| (d * d).ln()).sum();
        let logdet_state = logdet_d2 - 2.0 * logdet_c1 + logdet_g;
        if !logdet_state.is_finite() {
            return Err(Error::numerical("state covariance log-determinant not finite"));
        }
        let logdet_zeta = if layout.zeta > 0 {
            -2.0 * par.c2.log_abs_det()?
        } else {
            0.0
        };
        Ok(Family {
            layout,
            par,
            blocks,
            f_blocks,
            g_fact,
            logdet_state,
            logdet_zeta,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// `W1 z` on the state part.
    pub fn w_state(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.layout.state_len());
        for bl in &self.blocks {
            let b = &self.par.b[bl.chain];
            for j in 0..bl.q {
                let zj = z[bl.z_off + j];
                if zj == 0.0 {
                    continue;
                }
                for i in 0..bl.p {
                    x[bl.x_off + i] += b[(i, j)] * zj;
                }
            }
        }
        x
    }

    /// `W1^T x` on the state part.
    pub fn wt_state(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.layout.factor_len());
        for bl in &self.blocks {
            let b = &self.par.b[bl.chain];
            for j in 0..bl.q {
                let mut s = 0.0;
                for i in 0..bl.p {
                    s += b[(i, j)] * x[bl.x_off + i];
                }
                z[bl.z_off + j] = s;
            }
        }
        z
    }

    /// `Sigma1 v = C1^{-T} C1^{-1} v`.
    pub fn sigma1_apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.par.c1.solve_transposed(&self.par.c1.solve(v)?)
    }

    /// `eta = C^{-T} omega`, split into the factor part and the zeta part.
    pub fn eta(&self, omega: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
        let n_z = self.layout.factor_len();
        let eta_z = self
            .par
            .c1
            .solve_transposed(&omega.rows(0, n_z).clone_owned())?;
        let eta_zeta = if self.layout.zeta > 0 {
            self.par
                .c2
                .solve_transposed(&omega.rows(n_z, self.layout.zeta).clone_owned())?
        } else {
            DVector::zeros(0)
        };
        Ok((eta_z, eta_zeta))
    }

    /// Mean of theta under the current parameters.
    pub fn mean_theta(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.layout.theta_len());
        match self.layout.mean_mode {
            MeanMode::HdSm => mean.copy_from(&self.par.mu),
            MeanMode::LdSm => {
                let n_z = self.layout.factor_len();
                let mu_z = self.par.mu.rows(0, n_z).clone_owned();
                let x = self.w_state(&mu_z);
                mean.rows_mut(0, self.layout.state_len()).copy_from(&x);
                for i in 0..self.layout.zeta {
                    mean[self.layout.state_len() + i] = self.par.mu[n_z + i];
                }
            }
        }
        mean
    }

    /// The deterministic transform `theta = M mu + W C^{-T} omega + Z e`.
    pub fn sample_theta(&self, u: &NoiseDraw) -> Result<DVector<f64>> {
        u.matches(self.layout)?;
        let (eta_z, eta_zeta) = self.eta(&u.omega)?;
        let mut theta = self.mean_theta();
        let wx = self.w_state(&eta_z);
        let n_x = self.layout.state_len();
        for i in 0..n_x {
            theta[i] += wx[i] + self.par.delta[i] * u.eps[i];
        }
        for i in 0..self.layout.zeta {
            theta[n_x + i] += eta_zeta[i];
        }
        Ok(theta)
    }

    /// `(W1 Sigma1 W1^T + D^2)^{-1} v` through the inner factorization of G.
    pub fn state_solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n_x = self.layout.state_len();
        let mut w = DVector::zeros(n_x);
        for i in 0..n_x {
            w[i] = v[i] / (self.par.delta[i] * self.par.delta[i]);
        }
        let t = self.wt_state(&w);
        let u = self.g_fact.solve(&t)?;
        let wu = self.w_state(&u);
        let mut out = w;
        for i in 0..n_x {
            out[i] -= wu[i] / (self.par.delta[i] * self.par.delta[i]);
        }
        Ok(out)
    }

    /// `(W Sigma W^T + Z^2)^{-1} (theta - M mu)` blockwise.
    pub fn a_vec(&self, centered: &DVector<f64>) -> Result<DVector<f64>> {
        let n_x = self.layout.state_len();
        let c_x = centered.rows(0, n_x).clone_owned();
        let a_x = self.state_solve(&c_x)?;
        let mut a = DVector::zeros(self.layout.theta_len());
        a.rows_mut(0, n_x).copy_from(&a_x);
        if self.layout.zeta > 0 {
            let c_zeta = centered.rows(n_x, self.layout.zeta).clone_owned();
            let a_zeta = self.par.c2.matvec(&self.par.c2.matvec_t(&c_zeta));
            a.rows_mut(n_x, self.layout.zeta).copy_from(&a_zeta);
        }
        Ok(a)
    }

    /// Gaussian log-density of theta under the family.
    pub fn log_q(&self, theta: &DVector<f64>) -> Result<f64> {
        if theta.len() != self.layout.theta_len() {
            return Err(Error::invalid("theta length does not match layout"));
        }
        let centered = theta - self.mean_theta();
        let n_x = self.layout.state_len();
        let c_x = centered.rows(0, n_x).clone_owned();
        let quad_x = self.state_solve(&c_x)?.dot(&c_x);
        let quad_zeta = if self.layout.zeta > 0 {
            let c_zeta = centered.rows(n_x, self.layout.zeta).clone_owned();
            self.par.c2.matvec_t(&c_zeta).norm_squared()
        } else {
            0.0
        };
        let dim = self.layout.theta_len() as f64;
        Ok(-0.5
            * (dim * (2.0 * std::f64::consts::PI).ln()
                + self.logdet_state
                + self.logdet_zeta
                + quad_x
                + quad_zeta))
    }

    /// Monte Carlo ELBO estimate with `s` reparametrized draws.
    pub fn elbo_estimate<R: Rng>(&self, model: &dyn Model, s: usize, rng: &mut R) -> Result<f64> {
        if s == 0 {
            return Err(Error::invalid("ELBO estimate needs at least one sample"));
        }
        let mut acc = 0.0;
        for _ in 0..s {
            let u = NoiseDraw::sample(self.layout, rng);
            let theta = self.sample_theta(&u)?;
            acc += model.log_h(&theta)? - self.log_q(&theta)?;
        }
        Ok(acc / s as f64)
    }

    /// Single-draw unbiased gradient estimate of the ELBO.
    pub fn grad(
        &self,
        model: &dyn Model,
        u: &NoiseDraw,
        estimator: Estimator,
    ) -> Result<GradientSet> {
        u.matches(self.layout)?;
        let lay = self.layout;
        let n_x = lay.state_len();
        let n_z = lay.factor_len();

        let (eta_z, eta_zeta) = self.eta(&u.omega)?;

        // centered draw c = W eta + Z eps and the sample theta
        let w_eta = self.w_state(&eta_z);
        let mut c_x = w_eta.clone();
        for i in 0..n_x {
            c_x[i] += self.par.delta[i] * u.eps[i];
        }
        let mut theta = self.mean_theta();
        for i in 0..n_x {
            theta[i] += c_x[i];
        }
        for i in 0..lay.zeta {
            theta[n_x + i] += eta_zeta[i];
        }

        let g = model.grad_log_h(&theta)?;
        if g.len() != lay.theta_len() {
            return Err(Error::invalid("model gradient length mismatch"));
        }
        let g_x = g.rows(0, n_x).clone_owned();
        let g_zeta = g.rows(n_x, lay.zeta).clone_owned();

        let a_x = self.state_solve(&c_x)?;
        let a_zeta = if lay.zeta > 0 {
            self.par.c2.matvec(&self.par.c2.matvec_t(&eta_zeta))
        } else {
            DVector::zeros(0)
        };

        let v_x = &g_x + &a_x;
        let v_zeta = &g_zeta + &a_zeta;

        // factor-space view of the mean entering the loading gradient
        let s_z = match lay.mean_mode {
            MeanMode::LdSm => self.par.mu.rows(0, n_z) + &eta_z,
            MeanMode::HdSm => eta_z.clone(),
        };

        let mut out = GradientSet::zeros_like(self.par);

        match estimator {
            Estimator::Roeder => {
                // mu
                match lay.mean_mode {
                    MeanMode::LdSm => {
                        let z_part = self.wt_state(&v_x);
                        for i in 0..n_z {
                            out.mu[i] = z_part[i];
                        }
                        for i in 0..lay.zeta {
                            out.mu[n_z + i] = v_zeta[i];
                        }
                    }
                    MeanMode::HdSm => {
                        for i in 0..n_x {
                            out.mu[i] = v_x[i];
                        }
                        for i in 0..lay.zeta {
                            out.mu[n_x + i] = v_zeta[i];
                        }
                    }
                }
                // B: per-time outer products of v with the factor deviation
                self.accumulate_b(&mut out.b, &v_x, &s_z);
                // delta
                for i in 0..n_x {
                    out.delta[i] = v_x[i] * u.eps[i];
                }
                // C: -eta (C^{-1} W^T v)^T on the masks
                let wv_z = self.sigma_half_solve(&self.wt_state(&v_x))?;
                let wv_zeta = if lay.zeta > 0 {
                    self.par.c2.solve(&v_zeta)?
                } else {
                    DVector::zeros(0)
                };
                for (idx, (i, j)) in self.par.c1.positions().iter().enumerate() {
                    out.c1[idx] = -eta_z[*i] * wv_z[*j];
                }
                for (idx, (i, j)) in self.par.c2.positions().iter().enumerate() {
                    out.c2[idx] = -eta_zeta[*i] * wv_zeta[*j];
                }
            }
            Estimator::Standard => {
                // mu: M^T g
                match lay.mean_mode {
                    MeanMode::LdSm => {
                        let z_part = self.wt_state(&g_x);
                        for i in 0..n_z {
                            out.mu[i] = z_part[i];
                        }
                        for i in 0..lay.zeta {
                            out.mu[n_z + i] = g_zeta[i];
                        }
                    }
                    MeanMode::HdSm => {
                        for i in 0..n_x {
                            out.mu[i] = g_x[i];
                        }
                        for i in 0..lay.zeta {
                            out.mu[n_x + i] = g_zeta[i];
                        }
                    }
                }

                let g_inv_blocks = self.g_inv_diag_blocks()?;

                // B: T1 + T2 + T3
                self.accumulate_b(&mut out.b, &g_x, &s_z);
                let k_z = self.sigma1_apply(&self.wt_state(&a_x))?;
                let t3_col = &eta_z - &k_z;
                self.accumulate_b(&mut out.b, &a_x, &t3_col);
                for (bi, bl) in self.blocks.iter().enumerate() {
                    let b = &self.par.b[bl.chain];
                    let ginv = &g_inv_blocks[bi];
                    for jj in 0..bl.q {
                        for i in jj..bl.p {
                            let w = 1.0
                                / (self.par.delta[bl.x_off + i] * self.par.delta[bl.x_off + i]);
                            let mut s = 0.0;
                            for m in 0..bl.q {
                                s += b[(i, m)] * ginv[(m, jj)];
                            }
                            out.b[bl.chain][(i, jj)] += w * s;
                        }
                    }
                }

                // delta
                for (bi, bl) in self.blocks.iter().enumerate() {
                    let b = &self.par.b[bl.chain];
                    let ginv = &g_inv_blocks[bi];
                    for r in 0..bl.p {
                        let i = bl.x_off + r;
                        let d = self.par.delta[i];
                        let quad = (0..bl.q)
                            .map(|m| {
                                (0..bl.q)
                                    .map(|l| b[(r, m)] * ginv[(m, l)] * b[(r, l)])
                                    .sum::<f64>()
                            })
                            .sum::<f64>();
                        let sinv_ii = 1.0 / (d * d) - quad / (d * d * d * d);
                        out.delta[i] =
                            v_x[i] * u.eps[i] + sinv_ii * d - a_x[i] * a_x[i] * d;
                    }
                }

                // C
                let wv_z = self.sigma_half_solve(&self.wt_state(&v_x))?;
                let wa_z = self.sigma_half_solve(&self.wt_state(&a_x))?;
                for (idx, (i, j)) in self.par.c1.positions().iter().enumerate() {
                    out.c1[idx] = -eta_z[*i] * wv_z[*j] + k_z[*i] * wa_z[*j];
                }
                // E3 on the factor mask: Sigma1 F G^{-1} C1, column by column
                let mask = self.par.c1.positions();
                let mut col_of: Vec<Vec<usize>> = vec![Vec::new(); n_z];
                for (idx, (_, j)) in mask.iter().enumerate() {
                    col_of[*j].push(idx);
                }
                for j in 0..n_z {
                    if col_of[j].is_empty() {
                        continue;
                    }
                    let mut e = DVector::zeros(n_z);
                    for (i, v) in self.par.c1.column_entries(j) {
                        e[i] = v;
                    }
                    let y = self.g_fact.solve(&e)?;
                    let mut fy = DVector::zeros(n_z);
                    for (bi, bl) in self.blocks.iter().enumerate() {
                        for r in 0..bl.q {
                            let mut s = 0.0;
                            for m in 0..bl.q {
                                s += self.f_blocks[bi][(r, m)] * y[bl.z_off + m];
                            }
                            fy[bl.z_off + r] = s;
                        }
                    }
                    let col = self.sigma1_apply(&fy)?;
                    for &idx in &col_of[j] {
                        out.c1[idx] -= col[mask[idx].0];
                    }
                }

                if lay.zeta > 0 {
                    let wv_zeta = self.par.c2.solve(&v_zeta)?;
                    let wa_zeta = self.par.c2.solve(&a_zeta)?;
                    for (idx, (i, j)) in self.par.c2.positions().iter().enumerate() {
                        let k_i = eta_zeta[*i]; // k_zeta = centered zeta = eta_zeta
                        out.c2[idx] = -eta_zeta[*i] * wv_zeta[*j] + k_i * wa_zeta[*j];
                        if i == j {
                            out.c2[idx] -= 1.0 / self.par.c2.diag(*j);
                        }
                    }
                }
            }
        }

        // identifiability mask on the loading gradients
        for b in &mut out.b {
            let q = b.ncols();
            for j in 1..q {
                for i in 0..j.min(b.nrows()) {
                    b[(i, j)] = 0.0;
                }
            }
        }
        Ok(out)
    }

    fn accumulate_b(&self, out: &mut [DMatrix<f64>], x_vec: &DVector<f64>, z_vec: &DVector<f64>) {
        for bl in &self.blocks {
            for j in 0..bl.q {
                let zj = z_vec[bl.z_off + j];
                if zj == 0.0 {
                    continue;
                }
                for i in 0..bl.p {
                    out[bl.chain][(i, j)] += x_vec[bl.x_off + i] * zj;
                }
            }
        }
    }

    /// `C1^{-1} v` (the half-solve used by the C gradients).
    fn sigma_half_solve(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.par.c1.solve(v)
    }

    /// Diagonal `q x q` blocks of `G^{-1}`, one per time block.
    fn g_inv_diag_blocks(&self) -> Result<Vec<DMatrix<f64>>> {
        let n_z = self.layout.factor_len();
        let mut out = Vec::with_capacity(self.blocks.len());
        for bl in &self.blocks {
            let mut block = DMatrix::zeros(bl.q, bl.q);
            for j in 0..bl.q {
                let mut e = DVector::zeros(n_z);
                e[bl.z_off + j] = 1.0;
                let col = self.g_fact.solve(&e)?;
                for i in 0..bl.q {
                    block[(i, j)] = col[bl.z_off + i];
                }
            }
            out.push(block);
        }
        Ok(out)
    }

    /// Log-determinant of the theta covariance (state block plus zeta block).
    pub fn cov_logdet(&self) -> f64 {
        self.logdet_state + self.logdet_zeta
    }
}

/// Samples `theta` by the reparametrization trick.
pub fn sample_theta(
    par: &VariationalParams,
    layout: &FactorLayout,
    u: &NoiseDraw,
) -> Result<DVector<f64>> {
    Family::new(layout, par)?.sample_theta(u)
}

/// Log-density of the variational family at `theta`.
pub fn log_q(par: &VariationalParams, layout: &FactorLayout, theta: &DVector<f64>) -> Result<f64> {
    Family::new(layout, par)?.log_q(theta)
}

/// Monte Carlo estimate of the ELBO.
pub fn elbo_estimate<R: Rng>(
    par: &VariationalParams,
    layout: &FactorLayout,
    model: &dyn Model,
    s: usize,
    rng: &mut R,
) -> Result<f64> {
    Family::new(layout, par)?.elbo_estimate(model, s, rng)
}

/// Single-draw standard gradient estimate.
pub fn grad_standard(
    par: &VariationalParams,
    layout: &FactorLayout,
    model: &dyn Model,
    u: &NoiseDraw,
) -> Result<GradientSet> {
    Family::new(layout, par)?.grad(model, u, Estimator::Standard)
}

/// Single-draw gradient estimate in the form that vanishes at an exact fit.
pub fn grad_roeder(
    par: &VariationalParams,
    layout: &FactorLayout,
    model: &dyn Model,
    u: &NoiseDraw,
) -> Result<GradientSet> {
    Family::new(layout, par)?.grad(model, u, Estimator::Roeder)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::layout::MeanMode;

    #[test]
    fn scalar_case_expands_by_hand() {
        // p = q = 1, one state, no zeta: theta = b mu + b omega + d eps
        let layout = FactorLayout::lr_s(1, 1, 1, 0, MeanMode::LdSm);
        let mut par = VariationalParams::init(&layout, &[]).unwrap();
        par.mu[0] = 0.7;
        par.b[0][(0, 0)] = 1.3;
        par.delta[0] = 0.4;
        let fam = Family::new(&layout, &par).unwrap();
        let u = NoiseDraw {
            omega: DVector::from_vec(vec![0.5]),
            eps: DVector::from_vec(vec![-1.2]),
        };
        let theta = fam.sample_theta(&u).unwrap();
        let expect = 1.3 * 0.7 + 1.3 * 0.5 + 0.4 * (-1.2);
        assert!((theta[0] - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_noise_recovers_mean() {
        let layout = FactorLayout::lr_s(3, 2, 2, 2, MeanMode::LdSm);
        let mask = vec![(0, 0), (1, 1), (1, 0)];
        let mut par = VariationalParams::init(&layout, &mask).unwrap();
        let mut rng = rand::rngs::mock::StepRng::new(3, 11);
        par.randomize(&mut rng, 0.4);
        let fam = Family::new(&layout, &par).unwrap();
        let theta = fam.sample_theta(&NoiseDraw::zeros(&layout)).unwrap();
        assert!((theta - fam.mean_theta()).norm() < 1e-14);
    }

    #[test]
    fn log_q_peaks_at_mean_and_widens_with_delta() {
        let layout = FactorLayout::lr_s(2, 1, 2, 1, MeanMode::HdSm);
        let mut par = VariationalParams::init(&layout, &[(0, 0)]).unwrap();
        let fam = Family::new(&layout, &par).unwrap();
        let at_mean = fam.log_q(&fam.mean_theta()).unwrap();
        // value at the mean is -0.5 log |2 pi Cov|
        let dim = layout.theta_len() as f64;
        let expect = -0.5 * (dim * (2.0 * std::f64::consts::PI).ln() + fam.cov_logdet());
        assert!((at_mean - expect).abs() < 1e-12);

        let mean = fam.mean_theta();
        par.delta *= 2.0;
        let fam2 = Family::new(&layout, &par).unwrap();
        assert!(fam2.log_q(&mean).unwrap() < at_mean);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let layout = FactorLayout::lr_s(2, 1, 2, 0, MeanMode::LdSm);
        let par = VariationalParams::init(&layout, &[]).unwrap();
        let fam = Family::new(&layout, &par).unwrap();
        let bad = NoiseDraw {
            omega: DVector::zeros(1),
            eps: DVector::zeros(4),
        };
        assert!(fam.sample_theta(&bad).is_err());
        assert!(fam.log_q(&DVector::zeros(3)).is_err());
    }
}
