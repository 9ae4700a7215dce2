//! Dense reference implementations of the family math.
//!
//! Everything here materializes the full transform matrices (`W`, `Z`, the
//! mean map, the Kronecker-structured loading derivative, commutation
//! matrices) and evaluates the gradient formulas literally. It is meant for
//! verification on small instances and is deliberately independent of the
//! structured evaluation paths; nothing in the optimized code calls into
//! this module.

use crate::error::{Error, Result};
use crate::family::{Estimator, FactorLayout, GradientSet, MeanMode, NoiseDraw, VariationalParams};
use crate::matcalc::{commutation_matrix, kron};
use crate::model::Model;
use nalgebra::{DMatrix, DVector};

/// Log-density of a dense multivariate normal.
pub fn dense_mvn_logpdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::numerical("covariance is not SPD"))?;
    let dim = x.len() as f64;
    let mut logdet = 0.0;
    for i in 0..x.len() {
        logdet += 2.0 * chol.l_dirty()[(i, i)].ln();
    }
    let d = x - mean;
    let quad = chol.solve(&d).dot(&d);
    Ok(-0.5 * (dim * (2.0 * std::f64::consts::PI).ln() + logdet + quad))
}

/// Fully materialized family transform.
pub struct DenseFamily {
    pub layout: FactorLayout,
    /// theta x rho factor map.
    pub w: DMatrix<f64>,
    /// theta x dim(mu) mean map.
    pub m: DMatrix<f64>,
    /// theta x theta diagonal noise map.
    pub z: DMatrix<f64>,
    /// rho x rho precision Cholesky factor.
    pub c: DMatrix<f64>,
    /// rho covariance `C^{-T} C^{-1}`.
    pub sigma: DMatrix<f64>,
    /// theta covariance `W Sigma W^T + Z^2`.
    pub cov: DMatrix<f64>,
    mu: DVector<f64>,
}

impl DenseFamily {
    pub fn new(layout: &FactorLayout, par: &VariationalParams) -> Result<Self> {
        par.validate(layout)?;
        let n_x = layout.state_len();
        let n_z = layout.factor_len();
        let n_theta = layout.theta_len();
        let n_rho = layout.rho_len();

        let mut w = DMatrix::zeros(n_theta, n_rho);
        for bl in crate::family::blocks(layout) {
            let b = &par.b[bl.chain];
            for j in 0..bl.q {
                for i in 0..bl.p {
                    w[(bl.x_off + i, bl.z_off + j)] = b[(i, j)];
                }
            }
        }
        for i in 0..layout.zeta {
            w[(n_x + i, n_z + i)] = 1.0;
        }

        let m = match layout.mean_mode {
            MeanMode::LdSm => w.clone(),
            MeanMode::HdSm => DMatrix::identity(n_theta, n_theta),
        };

        let mut z = DMatrix::zeros(n_theta, n_theta);
        for i in 0..n_x {
            z[(i, i)] = par.delta[i];
        }

        let mut c = DMatrix::zeros(n_rho, n_rho);
        let c1 = par.c1.to_dense();
        for j in 0..n_z {
            for i in 0..n_z {
                c[(i, j)] = c1[(i, j)];
            }
        }
        let c2 = par.c2.to_dense();
        for j in 0..layout.zeta {
            for i in 0..layout.zeta {
                c[(n_z + i, n_z + j)] = c2[(i, j)];
            }
        }

        let c_inv = c
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::numerical("C is singular"))?;
        let sigma = c_inv.transpose() * &c_inv;
        let cov = &w * &sigma * w.transpose() + &z * &z;

        Ok(DenseFamily {
            layout: layout.clone(),
            w,
            m,
            z,
            c,
            sigma,
            cov,
            mu: par.mu.clone(),
        })
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.m * &self.mu
    }

    fn e_full(&self, u: &NoiseDraw) -> DVector<f64> {
        let mut e = DVector::zeros(self.layout.theta_len());
        for i in 0..u.eps.len() {
            e[i] = u.eps[i];
        }
        e
    }

    fn eta_rho(&self, u: &NoiseDraw) -> DVector<f64> {
        self.c.transpose().lu().solve(&u.omega).expect("C invertible")
    }

    pub fn sample(&self, u: &NoiseDraw) -> DVector<f64> {
        self.mean() + &self.w * self.eta_rho(u) + &self.z * self.e_full(u)
    }

    pub fn log_q(&self, theta: &DVector<f64>) -> Result<f64> {
        dense_mvn_logpdf(theta, &self.mean(), &self.cov)
    }

    /// Literal evaluation of the single-draw gradient formulas, masked onto
    /// the parameter patterns.
    pub fn grad(
        &self,
        par: &VariationalParams,
        model: &dyn Model,
        u: &NoiseDraw,
        estimator: Estimator,
    ) -> Result<GradientSet> {
        let lay = &self.layout;
        let n_x = lay.state_len();
        let n_z = lay.factor_len();

        let eta = self.eta_rho(u);
        let ze = &self.z * self.e_full(u);
        let c_vec = &self.w * &eta + ze;
        let theta = self.mean() + &c_vec;
        let g = model.grad_log_h(&theta)?;
        let cov_inv = self
            .cov
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::numerical("theta covariance is singular"))?;
        let a = &cov_inv * &c_vec;

        // factor-space deviation entering the loading derivative
        let s = match lay.mean_mode {
            MeanMode::LdSm => &self.mu + &eta,
            MeanMode::HdSm => eta.clone(),
        };

        let mut out = GradientSet::zeros_like(par);

        // mu gradient
        let mu_target = match estimator {
            Estimator::Standard => self.m.transpose() * &g,
            Estimator::Roeder => self.m.transpose() * (&g + &a),
        };
        out.mu.copy_from(&mu_target);

        // B gradients per chain through the literal Kronecker derivative
        let chains = lay.chains();
        for (ci, cd) in chains.iter().enumerate() {
            let dwdb = dw_db(lay, ci);
            let vec_b: DVector<f64> = match estimator {
                Estimator::Standard => {
                    let t1 = vec_of(&(&g * s.transpose()));
                    let t2 = vec_of(&(&cov_inv * &self.w * &self.sigma));
                    let t3 = vec_of(
                        &(&a * eta.transpose()
                            - &a * c_vec.transpose() * &cov_inv * &self.w * &self.sigma),
                    );
                    dwdb.transpose() * (t1 + t2 + t3)
                }
                Estimator::Roeder => {
                    let t1 = vec_of(&((&g + &a) * s.transpose()));
                    dwdb.transpose() * t1
                }
            };
            for j in 0..cd.q {
                for i in 0..cd.p {
                    out.b[ci][(i, j)] = vec_b[j * cd.p + i];
                }
            }
        }

        // delta gradient from the state block
        let s_x = self.cov.view((0, 0), (n_x, n_x)).clone_owned();
        let s_x_inv = s_x
            .try_inverse()
            .ok_or_else(|| Error::numerical("state covariance singular"))?;
        let g_x = g.rows(0, n_x).clone_owned();
        let c_x = c_vec.rows(0, n_x).clone_owned();
        let d_mat = DMatrix::from_diagonal(&par.delta);
        let delta_mat: DMatrix<f64> = match estimator {
            Estimator::Standard => {
                &g_x * u.eps.transpose()
                    + &s_x_inv * &d_mat
                    + &s_x_inv * &c_x * u.eps.transpose()
                    - &s_x_inv * &c_x * (c_x.transpose() * &s_x_inv * &d_mat)
            }
            Estimator::Roeder => {
                (&g_x + &s_x_inv * &c_x) * u.eps.transpose()
            }
        };
        for i in 0..n_x {
            out.delta[i] = delta_mat[(i, i)];
        }

        // C gradient as the printed matrix expression, then masked
        let c_invt = self
            .c
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::numerical("C singular"))?
            .transpose();
        let wc = &self.w * &c_invt;
        let full_c: DMatrix<f64> = match estimator {
            Estimator::Standard => {
                -&eta * g.transpose() * &wc
                    - &self.sigma * self.w.transpose() * &cov_inv * &wc
                    - &eta * c_vec.transpose() * &cov_inv * &wc
                    + &self.sigma
                        * self.w.transpose()
                        * &cov_inv
                        * &c_vec
                        * c_vec.transpose()
                        * &cov_inv
                        * &wc
            }
            Estimator::Roeder => {
                -&eta * (g.transpose() + c_vec.transpose() * &cov_inv) * &wc
            }
        };
        for (idx, (i, j)) in par.c1.positions().iter().enumerate() {
            out.c1[idx] = full_c[(*i, *j)];
        }
        for (idx, (i, j)) in par.c2.positions().iter().enumerate() {
            out.c2[idx] = full_c[(n_z + i, n_z + j)];
        }

        // identifiability mask on B
        for b in &mut out.b {
            for j in 1..b.ncols() {
                for i in 0..j.min(b.nrows()) {
                    b[(i, j)] = 0.0;
                }
            }
        }
        Ok(out)
    }
}

fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// The literal loading derivative `dW/dB` for one chain: a
/// `(dim theta * dim rho) x (p q)` matrix built from selector matrices and
/// the Kronecker/commutation identity for `d(I_n (x) B)/dB`.
pub fn dw_db(layout: &FactorLayout, chain: usize) -> DMatrix<f64> {
    let chains = layout.chains();
    let cd = chains[chain];
    let n = cd.n_states;
    let (p, q) = (cd.p, cd.q);
    let n_theta = layout.theta_len();
    let n_rho = layout.rho_len();
    let x_off = layout.state_offsets()[chain];
    let z_off = layout.factor_offsets()[chain];

    // selectors: W_chain = P1 (I_n (x) B) Q1
    let mut p1 = DMatrix::zeros(n_theta, p * n);
    for i in 0..p * n {
        p1[(x_off + i, i)] = 1.0;
    }
    let mut q1 = DMatrix::zeros(q * n, n_rho);
    for i in 0..q * n {
        q1[(i, z_off + i)] = 1.0;
    }

    // d(I_n (x) B)/dB = [{(I_n (x) K_{q,n})(vec(I_n) (x) I_q)} (x) I_p]
    let k_qn = commutation_matrix(q, n).expect("valid dims");
    let i_n = DMatrix::<f64>::identity(n, n);
    let vec_in = DMatrix::from_column_slice(n * n, 1, DMatrix::<f64>::identity(n, n).as_slice());
    let inner = kron(&i_n, &k_qn) * kron(&vec_in, &DMatrix::<f64>::identity(q, q));
    let d_kron = kron(&inner, &DMatrix::<f64>::identity(p, p));

    kron(&q1.transpose(), &p1) * d_kron
}
