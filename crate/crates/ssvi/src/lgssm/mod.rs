//! Exact-inference oracle: a linear-Gaussian state space model with Kalman
//! filtering and RTS smoothing, used to validate the variational engine
//! end to end.

use crate::error::{Error, Result};
use crate::family::ZetaGraph;
use crate::model::Model;
use nalgebra::{DMatrix, DVector};

/// Time-invariant linear-Gaussian state space model:
/// `X_0 ~ N(m0, P0)`, `X_t = F X_{t-1} + w_t`, `y_t = G X_t + v_t`.
#[derive(Debug, Clone)]
pub struct Lgssm {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub m0: DVector<f64>,
    pub p0: DMatrix<f64>,
}

impl Lgssm {
    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.state_dim();
        let m = self.obs_dim();
        if self.f.ncols() != p
            || self.q.shape() != (p, p)
            || self.g.ncols() != p
            || self.r.shape() != (m, m)
            || self.m0.len() != p
            || self.p0.shape() != (p, p)
        {
            return Err(Error::invalid("inconsistent state space dimensions"));
        }
        for (name, mat) in [("Q", &self.q), ("R", &self.r), ("P0", &self.p0)] {
            if mat.clone().cholesky().is_none() {
                return Err(Error::invalid(format!("{name} must be SPD")));
            }
        }
        Ok(())
    }
}

/// Filtered moments (index 0 is the untouched prior on `X_0`) plus the exact
/// log evidence.
#[derive(Debug, Clone)]
pub struct FilterResult {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub pred_means: Vec<DVector<f64>>,
    pub pred_covs: Vec<DMatrix<f64>>,
    pub log_evidence: f64,
}

/// Smoothed moments for `X_0 .. X_T`.
#[derive(Debug, Clone)]
pub struct SmootherResult {
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
}

/// Forward recursion; `y` holds `y_1 .. y_T`.
pub fn kalman_filter(model: &Lgssm, y: &[DVector<f64>]) -> Result<FilterResult> {
    model.validate()?;
    let p = model.state_dim();
    let m = model.obs_dim();
    let mut means = vec![model.m0.clone()];
    let mut covs = vec![model.p0.clone()];
    let mut pred_means = Vec::with_capacity(y.len());
    let mut pred_covs = Vec::with_capacity(y.len());
    let mut log_evidence = 0.0;
    let eye = DMatrix::<f64>::identity(p, p);

    for yt in y {
        if yt.len() != m {
            return Err(Error::invalid("observation dimension mismatch"));
        }
        let m_prev = means.last().unwrap();
        let p_prev = covs.last().unwrap();
        let m_pred = &model.f * m_prev;
        let p_pred = &model.f * p_prev * model.f.transpose() + &model.q;
        pred_means.push(m_pred.clone());
        pred_covs.push(p_pred.clone());

        let innov_cov = &model.g * &p_pred * model.g.transpose() + &model.r;
        let chol = innov_cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("innovation covariance is not SPD"))?;
        let resid = yt - &model.g * &m_pred;
        let mut logdet = 0.0;
        for i in 0..m {
            logdet += 2.0 * chol.l_dirty()[(i, i)].ln();
        }
        let quad = chol.solve(&resid).dot(&resid);
        log_evidence +=
            -0.5 * (m as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + quad);

        // gain K = P_pred G^T S^{-1}
        let k = chol
            .solve(&(&model.g * p_pred.transpose()))
            .transpose();
        let m_new = &m_pred + &k * resid;
        // Joseph form keeps the covariance symmetric positive definite
        let ikg = &eye - &k * &model.g;
        let p_new = &ikg * &p_pred * ikg.transpose() + &k * &model.r * k.transpose();
        means.push(m_new);
        covs.push(p_new);
    }
    Ok(FilterResult {
        means,
        covs,
        pred_means,
        pred_covs,
        log_evidence,
    })
}

/// RTS backward pass.
pub fn kalman_smoother(model: &Lgssm, y: &[DVector<f64>]) -> Result<SmootherResult> {
    let filt = kalman_filter(model, y)?;
    let t_len = y.len();
    let mut means = filt.means.clone();
    let mut covs = filt.covs.clone();
    for t in (0..t_len).rev() {
        // gain J_t = P_t F^T P_pred_{t+1}^{-1}
        let p_pred = &filt.pred_covs[t];
        let lu = p_pred.clone().lu();
        let j = lu
            .solve(&(&model.f * filt.covs[t].transpose()))
            .ok_or_else(|| Error::numerical("predicted covariance singular"))?
            .transpose();
        means[t] = &filt.means[t] + &j * (&means[t + 1] - &filt.pred_means[t]);
        covs[t] = &filt.covs[t] + &j * (&covs[t + 1] - p_pred) * j.transpose();
    }
    Ok(SmootherResult { means, covs })
}

/// The joint state posterior of an LGSSM as a target for the variational
/// engine; the system matrices are fixed, so zeta is empty.
pub struct LgssmPosterior {
    model: Lgssm,
    y: Vec<DVector<f64>>,
    q_inv: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    p0_inv: DMatrix<f64>,
    log_norm: f64,
}

impl LgssmPosterior {
    pub fn new(model: Lgssm, y: Vec<DVector<f64>>) -> Result<Self> {
        model.validate()?;
        let p = model.state_dim() as f64;
        let m = model.obs_dim() as f64;
        let t_len = y.len() as f64;
        let inv = |a: &DMatrix<f64>| -> Result<(DMatrix<f64>, f64)> {
            let chol = a
                .clone()
                .cholesky()
                .ok_or_else(|| Error::numerical("noise covariance not SPD"))?;
            let mut logdet = 0.0;
            for i in 0..a.nrows() {
                logdet += 2.0 * chol.l_dirty()[(i, i)].ln();
            }
            Ok((chol.inverse(), logdet))
        };
        let (q_inv, ld_q) = inv(&model.q)?;
        let (r_inv, ld_r) = inv(&model.r)?;
        let (p0_inv, ld_p0) = inv(&model.p0)?;
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let log_norm = -0.5
            * ((p + t_len * p + t_len * m) * ln2pi + ld_p0 + t_len * ld_q + t_len * ld_r);
        Ok(LgssmPosterior {
            model,
            y,
            q_inv,
            r_inv,
            p0_inv,
            log_norm,
        })
    }

    pub fn system(&self) -> &Lgssm {
        &self.model
    }

    pub fn observations(&self) -> &[DVector<f64>] {
        &self.y
    }

    fn split(&self, theta: &DVector<f64>) -> Vec<DVector<f64>> {
        let p = self.model.state_dim();
        (0..self.y.len() + 1)
            .map(|t| theta.rows(t * p, p).clone_owned())
            .collect()
    }
}

impl Model for LgssmPosterior {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    fn n_states(&self) -> usize {
        self.y.len() + 1
    }

    fn zeta_graph(&self) -> ZetaGraph {
        ZetaGraph::default()
    }

    fn log_h(&self, theta: &DVector<f64>) -> Result<f64> {
        let x = self.split(theta);
        let mut acc = self.log_norm;
        let d0 = &x[0] - &self.model.m0;
        acc -= 0.5 * (&self.p0_inv * &d0).dot(&d0);
        for t in 1..x.len() {
            let dt = &x[t] - &self.model.f * &x[t - 1];
            acc -= 0.5 * (&self.q_inv * &dt).dot(&dt);
            let et = &self.y[t - 1] - &self.model.g * &x[t];
            acc -= 0.5 * (&self.r_inv * &et).dot(&et);
        }
        Ok(acc)
    }

    fn grad_log_h(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.model.state_dim();
        let x = self.split(theta);
        let t_len = self.y.len();
        let mut grad = DVector::zeros(theta.len());
        for t in 0..=t_len {
            let mut g = DVector::zeros(p);
            if t == 0 {
                g -= &self.p0_inv * (&x[0] - &self.model.m0);
            } else {
                g -= &self.q_inv * (&x[t] - &self.model.f * &x[t - 1]);
                g += self.model.g.transpose()
                    * (&self.r_inv * (&self.y[t - 1] - &self.model.g * &x[t]));
            }
            if t < t_len {
                let dnext = &x[t + 1] - &self.model.f * &x[t];
                g += self.model.f.transpose() * (&self.q_inv * dnext);
            }
            grad.rows_mut(t * p, p).copy_from(&g);
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::check_gradient;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn scalar_static_model(q: f64, r: f64) -> Lgssm {
        Lgssm {
            f: DMatrix::from_element(1, 1, 0.0),
            q: DMatrix::from_element(1, 1, q),
            g: DMatrix::from_element(1, 1, 1.0),
            r: DMatrix::from_element(1, 1, r),
            m0: DVector::zeros(1),
            p0: DMatrix::from_element(1, 1, 1.0),
        }
    }

    #[test]
    fn static_scalar_model_reduces_to_iid_evidence() {
        let model = scalar_static_model(0.7, 0.4);
        let y: Vec<DVector<f64>> = [0.3, -1.2, 0.8]
            .iter()
            .map(|&v| DVector::from_element(1, v))
            .collect();
        let filt = kalman_filter(&model, &y).unwrap();
        // with F = 0 each y_t ~ N(0, q + r) independently
        let var = 0.7 + 0.4;
        let expect: f64 = y
            .iter()
            .map(|v| {
                -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + v[0] * v[0] / var)
            })
            .sum();
        assert!((filt.log_evidence - expect).abs() < 1e-12);
    }

    fn random_model(p: usize, m: usize, rng: &mut StdRng) -> Lgssm {
        let f = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-0.4..0.4));
        let a = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-0.5..0.5));
        let q = &a * a.transpose() + DMatrix::<f64>::identity(p, p) * 0.3;
        let g = DMatrix::from_fn(m, p, |_, _| rng.gen_range(-1.0..1.0));
        let b = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.5..0.5));
        let r = &b * b.transpose() + DMatrix::<f64>::identity(m, m) * 0.4;
        let m0 = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
        let c = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-0.5..0.5));
        let p0 = &c * c.transpose() + DMatrix::<f64>::identity(p, p) * 0.5;
        Lgssm { f, q, g, r, m0, p0 }
    }

    /// Builds the joint Gaussian of (X_0..X_T, y_1..y_T) by propagating the
    /// linear maps, for brute-force verification.
    fn joint_gaussian(model: &Lgssm, t_len: usize) -> (DVector<f64>, DMatrix<f64>) {
        let p = model.state_dim();
        let m = model.obs_dim();
        let nx = p * (t_len + 1);
        let ny = m * t_len;
        // v = A w + b with w = (w0, w_1..w_T, v_1..v_T) independent N(0, I)
        let nw = p * (t_len + 1) + m * t_len;
        let mut a = DMatrix::<f64>::zeros(nx + ny, nw);
        let mut b = DVector::<f64>::zeros(nx + ny);
        let chol_p0 = model.p0.clone().cholesky().unwrap().l();
        let chol_q = model.q.clone().cholesky().unwrap().l();
        let chol_r = model.r.clone().cholesky().unwrap().l();
        // X_0
        a.view_mut((0, 0), (p, p)).copy_from(&chol_p0);
        b.rows_mut(0, p).copy_from(&model.m0);
        for t in 1..=t_len {
            // X_t rows = F * (X_{t-1} rows) + chol_q w_t
            let prev = a.rows((t - 1) * p, p).clone_owned();
            let fa = &model.f * prev;
            a.rows_mut(t * p, p).copy_from(&fa);
            let prev_b = b.rows((t - 1) * p, p).clone_owned();
            b.rows_mut(t * p, p).copy_from(&(&model.f * prev_b));
            a.view_mut((t * p, t * p), (p, p)).copy_from(&chol_q);
        }
        for t in 1..=t_len {
            let xrow = a.rows(t * p, p).clone_owned();
            let ga = &model.g * xrow;
            a.rows_mut(nx + (t - 1) * m, m).copy_from(&ga);
            let xb = b.rows(t * p, p).clone_owned();
            b.rows_mut(nx + (t - 1) * m, m)
                .copy_from(&(&model.g * xb));
            // noise columns: p*(t_len+1) state-noise entries come first
            a.view_mut((nx + (t - 1) * m, nx + (t - 1) * m), (m, m))
                .copy_from(&chol_r);
        }
        let cov = &a * a.transpose();
        (b, cov)
    }

    #[test]
    fn evidence_matches_dense_joint_gaussian() {
        let mut rng = StdRng::seed_from_u64(7);
        let model = random_model(2, 2, &mut rng);
        let t_len = 3;
        let y: Vec<DVector<f64>> = (0..t_len)
            .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let filt = kalman_filter(&model, &y).unwrap();

        let (mean, cov) = joint_gaussian(&model, t_len);
        let nx = 2 * (t_len + 1);
        let ny = 2 * t_len;
        let y_mean = mean.rows(nx, ny).clone_owned();
        let y_cov = cov.view((nx, nx), (ny, ny)).clone_owned();
        let mut y_stack = DVector::zeros(ny);
        for (t, yt) in y.iter().enumerate() {
            y_stack.rows_mut(t * 2, 2).copy_from(yt);
        }
        let expect = crate::reference::dense_mvn_logpdf(&y_stack, &y_mean, &y_cov).unwrap();
        assert!(
            (filt.log_evidence - expect).abs() / expect.abs() < 1e-9,
            "{} vs {}",
            filt.log_evidence,
            expect
        );
    }

    #[test]
    fn evidence_invariant_under_similarity_transform() {
        let mut rng = StdRng::seed_from_u64(9);
        let model = random_model(2, 1, &mut rng);
        let y: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_fn(1, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let base = kalman_filter(&model, &y).unwrap().log_evidence;

        let s = DMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                1.5
            } else if i > j {
                0.7
            } else {
                -0.2
            }
        });
        let s_inv = s.clone().try_inverse().unwrap();
        let transformed = Lgssm {
            f: &s * &model.f * &s_inv,
            q: &s * &model.q * s.transpose(),
            g: &model.g * &s_inv,
            r: model.r.clone(),
            m0: &s * &model.m0,
            p0: &s * &model.p0 * s.transpose(),
        };
        let t = kalman_filter(&transformed, &y).unwrap().log_evidence;
        assert!((base - t).abs() < 1e-9);
    }

    #[test]
    fn smoother_equals_filter_at_t1_and_conditioning_oracle() {
        let mut rng = StdRng::seed_from_u64(21);
        let model = random_model(2, 2, &mut rng);
        let y1 = vec![DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0))];
        let filt = kalman_filter(&model, &y1).unwrap();
        let smooth = kalman_smoother(&model, &y1).unwrap();
        assert!((&smooth.means[1] - &filt.means[1]).norm() < 1e-12);
        assert!((&smooth.covs[1] - &filt.covs[1]).norm() < 1e-12);

        // dense conditioning for T = 3
        let t_len = 3;
        let y: Vec<DVector<f64>> = (0..t_len)
            .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let smooth = kalman_smoother(&model, &y).unwrap();
        let (mean, cov) = joint_gaussian(&model, t_len);
        let nx = 2 * (t_len + 1);
        let ny = 2 * t_len;
        let mut y_stack = DVector::zeros(ny);
        for (t, yt) in y.iter().enumerate() {
            y_stack.rows_mut(t * 2, 2).copy_from(yt);
        }
        let sxx = cov.view((0, 0), (nx, nx)).clone_owned();
        let sxy = cov.view((0, nx), (nx, ny)).clone_owned();
        let syy = cov.view((nx, nx), (ny, ny)).clone_owned();
        let syy_lu = syy.clone().lu();
        let resid = &y_stack - mean.rows(nx, ny).clone_owned();
        let cond_mean =
            mean.rows(0, nx).clone_owned() + &sxy * syy_lu.solve(&resid).unwrap();
        let cond_cov = &sxx - &sxy * syy_lu.solve(&sxy.transpose()).unwrap();
        for t in 0..=t_len {
            assert!(
                (&smooth.means[t] - cond_mean.rows(t * 2, 2).clone_owned()).norm() < 1e-9,
                "smoothed mean t={t}"
            );
            let block = cond_cov.view((t * 2, t * 2), (2, 2)).clone_owned();
            assert!((&smooth.covs[t] - block).norm() < 1e-9, "smoothed cov t={t}");
        }

        // smoothing never inflates the filtered covariance
        let filt = kalman_filter(&model, &y).unwrap();
        for t in 0..=t_len {
            let diff = &filt.covs[t] - &smooth.covs[t];
            let eig = nalgebra::SymmetricEigen::new((&diff + diff.transpose()) * 0.5);
            assert!(eig.eigenvalues.min() > -1e-10);
        }

        // true state posterior precision is block tridiagonal
        let prec = cond_cov.try_inverse().unwrap();
        for bi in 0..=t_len {
            for bj in 0..=t_len {
                if bi.abs_diff(bj) > 1 {
                    let block = prec.view((bi * 2, bj * 2), (2, 2));
                    assert!(block.amax() < 1e-7, "precision block ({bi},{bj}) nonzero");
                }
            }
        }
    }

    #[test]
    fn posterior_model_gradient_checks() {
        let mut rng = StdRng::seed_from_u64(3);
        let model = random_model(2, 2, &mut rng);
        let y: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let post = LgssmPosterior::new(model, y).unwrap();
        let theta = DVector::from_fn(post.theta_len(), |_, _| rng.gen_range(-1.0..1.0));
        let err = check_gradient(&post, &theta, 20, 1e-5, &mut rng).unwrap();
        assert!(err < 1e-7, "err {err}");
    }
}
