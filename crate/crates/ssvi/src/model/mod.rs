//! The plug-in contract target models implement, plus the Gaussian targets
//! used throughout the test suites.

use crate::error::{Error, Result};
use crate::family::{
    ChainDims, FactorLayout, Family, MeanMode, VariationalParams, ZetaComponent, ZetaGraph,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// A target distribution `h(theta) = p(theta) p(y | theta)` with an analytic
/// gradient. Evaluation must be reentrant: concurrent calls on distinct
/// `theta` are safe.
pub trait Model: Sync {
    /// State dimension per time block.
    fn state_dim(&self) -> usize;
    /// Number of latent state times (including t = 0 when the model has an
    /// initial state).
    fn n_states(&self) -> usize;
    /// Second factor chain `(p2, n2)` for models using the LR-SA structure.
    fn second_chain(&self) -> Option<(usize, usize)> {
        None
    }
    /// Dependency structure of the static parameters.
    fn zeta_graph(&self) -> ZetaGraph;
    /// Unnormalized log posterior.
    fn log_h(&self, theta: &DVector<f64>) -> Result<f64>;
    /// Gradient of [`log_h`](Self::log_h), same length as `theta`.
    fn grad_log_h(&self, theta: &DVector<f64>) -> Result<DVector<f64>>;

    fn zeta_len(&self) -> usize {
        self.zeta_graph().total_len()
    }

    fn theta_len(&self) -> usize {
        let second = self.second_chain().map(|(p2, n2)| p2 * n2).unwrap_or(0);
        self.state_dim() * self.n_states() + second + self.zeta_len()
    }

    /// Default factor layout for this model at a given factor dimension.
    fn make_layout(&self, q: usize, mean_mode: MeanMode) -> Result<FactorLayout> {
        let layout = match self.second_chain() {
            None => FactorLayout::lr_s(
                self.state_dim(),
                q,
                self.n_states(),
                self.zeta_len(),
                mean_mode,
            ),
            Some((p2, n2)) => FactorLayout::lr_sa(
                ChainDims {
                    p: self.state_dim(),
                    q,
                    n_states: self.n_states(),
                },
                ChainDims {
                    p: p2,
                    q,
                    n_states: n2,
                },
                self.zeta_len(),
                mean_mode,
            ),
        };
        layout.validate()?;
        Ok(layout)
    }
}

/// Central-difference directional-derivative check of a model gradient.
/// Returns the maximum relative error over `directions` random unit vectors.
pub fn check_gradient<R: Rng>(
    model: &dyn Model,
    theta0: &DVector<f64>,
    directions: usize,
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    let f0 = model.log_h(theta0)?;
    if !f0.is_finite() {
        return Err(Error::numerical("log h not finite at the expansion point"));
    }
    let grad = model.grad_log_h(theta0)?;
    let gnorm = grad.norm();
    let n = theta0.len();
    let mut worst: f64 = 0.0;
    for _ in 0..directions {
        let mut v = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        v /= v.norm();
        let fp = model.log_h(&(theta0 + &v * h))?;
        let fm = model.log_h(&(theta0 - &v * h))?;
        let fd = (fp - fm) / (2.0 * h);
        let analytic = grad.dot(&v);
        let denom = analytic.abs().max(fd.abs()).max(1e-6 * gnorm + 1e-12);
        worst = worst.max((analytic - fd).abs() / denom);
    }
    Ok(worst)
}

/// A target identical to the variational density at a frozen parameter, up
/// to a configurable additive constant. At this target the exact-fit
/// gradient estimator is zero draw by draw.
pub struct SelfTarget {
    layout: FactorLayout,
    par: VariationalParams,
    offset: f64,
}

impl SelfTarget {
    pub fn new(layout: FactorLayout, par: VariationalParams, offset: f64) -> Result<Self> {
        par.validate(&layout)?;
        Ok(SelfTarget {
            layout,
            par,
            offset,
        })
    }

    pub fn frozen_params(&self) -> &VariationalParams {
        &self.par
    }
}

impl Model for SelfTarget {
    fn state_dim(&self) -> usize {
        self.layout.chain.p
    }

    fn n_states(&self) -> usize {
        self.layout.chain.n_states
    }

    fn second_chain(&self) -> Option<(usize, usize)> {
        self.layout.chain2.map(|c| (c.p, c.n_states))
    }

    fn zeta_graph(&self) -> ZetaGraph {
        if self.layout.zeta == 0 {
            ZetaGraph::default()
        } else {
            ZetaGraph::new(
                vec![ZetaComponent::dense("zeta", self.layout.zeta)],
                vec![],
            )
        }
    }

    fn log_h(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(Family::new(&self.layout, &self.par)?.log_q(theta)? + self.offset)
    }

    fn grad_log_h(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let fam = Family::new(&self.layout, &self.par)?;
        let centered = theta - fam.mean_theta();
        Ok(-fam.a_vec(&centered)?)
    }
}

/// Gaussian target with a known normalizer: `log h = offset + log N(theta;
/// mean, prec^{-1})`, so the maximal ELBO equals `offset` exactly whenever
/// the family can represent the target.
pub struct GaussianToy {
    mean: DVector<f64>,
    prec: DMatrix<f64>,
    logdet_prec: f64,
    offset: f64,
    p: usize,
    n_states: usize,
    zeta: usize,
}

impl GaussianToy {
    pub fn new(
        mean: DVector<f64>,
        cov: DMatrix<f64>,
        offset: f64,
        p: usize,
        n_states: usize,
        zeta: usize,
    ) -> Result<Self> {
        if mean.len() != p * n_states + zeta || cov.nrows() != mean.len() {
            return Err(Error::invalid("toy model dimensions are inconsistent"));
        }
        let chol = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("toy covariance is not SPD"))?;
        let mut logdet_cov = 0.0;
        for i in 0..mean.len() {
            logdet_cov += 2.0 * chol.l_dirty()[(i, i)].ln();
        }
        let prec = chol.inverse();
        Ok(GaussianToy {
            mean,
            prec,
            logdet_prec: -logdet_cov,
            offset,
            p,
            n_states,
            zeta,
        })
    }

    /// The log evidence this target integrates to.
    pub fn evidence(&self) -> f64 {
        self.offset
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }
}

impl Model for GaussianToy {
    fn state_dim(&self) -> usize {
        self.p
    }

    fn n_states(&self) -> usize {
        self.n_states
    }

    fn zeta_graph(&self) -> ZetaGraph {
        if self.zeta == 0 {
            ZetaGraph::default()
        } else {
            ZetaGraph::new(vec![ZetaComponent::dense("zeta", self.zeta)], vec![])
        }
    }

    fn log_h(&self, theta: &DVector<f64>) -> Result<f64> {
        let d = theta - &self.mean;
        let quad = (&self.prec * &d).dot(&d);
        let dim = theta.len() as f64;
        Ok(self.offset - 0.5 * (dim * (2.0 * std::f64::consts::PI).ln() - self.logdet_prec + quad))
    }

    fn grad_log_h(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        let d = theta - &self.mean;
        Ok(-(&self.prec * d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn standard_normal_gradient_is_zero_at_origin() {
        let toy = GaussianToy::new(
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            0.0,
            1,
            2,
            1,
        )
        .unwrap();
        let g = toy.grad_log_h(&DVector::zeros(3)).unwrap();
        assert!(g.norm() == 0.0);
        let mut rng = StdRng::seed_from_u64(1);
        let err = check_gradient(&toy, &DVector::zeros(3), 10, 1e-5, &mut rng).unwrap();
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn toy_gradient_matches_fd_at_random_point() {
        let mut rng = StdRng::seed_from_u64(2);
        let cov = DMatrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.3 });
        let toy = GaussianToy::new(
            DVector::from_vec(vec![0.5, -1.0, 2.0, 0.0]),
            cov,
            -3.0,
            2,
            1,
            2,
        )
        .unwrap();
        let theta = DVector::from_vec(vec![1.0, 0.3, -0.5, 0.8]);
        let err = check_gradient(&toy, &theta, 20, 1e-5, &mut rng).unwrap();
        assert!(err < 1e-7, "err {err}");
    }
}
