//! Spatio-temporal Poisson diffusion model: counts on a spatial grid driven
//! by a latent Markovian diffusion process, with analytic log posterior and
//! gradient.

mod basis;
mod grid;
mod sim;

pub use basis::{build_spatial_basis, Kernel};
pub use grid::{diffusion_operator, Grid};
pub use sim::simulate_dove;

use crate::error::{Error, Result};
use crate::family::{ZetaComponent, ZetaGraph};
use crate::model::Model;
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

/// Clamp for `exp(v)` inside the Poisson terms.
const EXP_CLAMP: f64 = 700.0;

/// Count data over a spatial grid.
#[derive(Debug, Clone)]
pub struct DoveData {
    /// Counts, `p` locations by `T` times.
    pub counts: DMatrix<f64>,
    /// Log observation offsets, same shape; zero when sampling effort is
    /// unknown.
    pub log_offsets: DMatrix<f64>,
    /// Grid coordinates (integer-valued lattice positions).
    pub coords: Vec<(f64, f64)>,
}

impl DoveData {
    pub fn locations(&self) -> usize {
        self.counts.nrows()
    }

    pub fn times(&self) -> usize {
        self.counts.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.coords.len() != self.counts.nrows() {
            return Err(Error::invalid("coordinate count does not match grid size"));
        }
        if self.log_offsets.shape() != self.counts.shape() {
            return Err(Error::invalid("offset shape does not match counts"));
        }
        if self.counts.iter().any(|&y| y < 0.0 || y.fract() != 0.0) {
            return Err(Error::invalid("counts must be nonnegative integers"));
        }
        Ok(())
    }
}

/// Priors and spatial-basis settings.
#[derive(Debug, Clone)]
pub struct DoveHyper {
    /// Inverse-gamma (shape, scale) for the measurement variance.
    pub ig_eps: (f64, f64),
    /// Inverse-gamma (shape, scale) for the innovation variance.
    pub ig_eta: (f64, f64),
    /// Inverse-gamma (shape, scale) for the diffusion-coefficient variance.
    pub ig_psi: (f64, f64),
    /// Inverse-gamma (shape, scale) for the basis-weight variance.
    pub ig_alpha: (f64, f64),
    /// Number of spatial basis eigenvectors.
    pub l: usize,
    /// Kernel range parameter.
    pub c: f64,
    /// Prior variance of the initial state.
    pub u0_var: f64,
    pub kernel: Kernel,
}

impl Default for DoveHyper {
    fn default() -> Self {
        DoveHyper {
            ig_eps: (2.8, 0.28),
            ig_eta: (2.9, 0.175),
            ig_psi: (2.8, 0.28),
            ig_alpha: (2.8, 0.28),
            l: 1,
            c: 4.0,
            u0_var: 10.0,
            kernel: Kernel::ExpDecay,
        }
    }
}

/// Whether the auxiliary log-intensity `v` sits in the static block (LR-S)
/// or gets its own factor chain (LR-SA).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoveParametrization {
    LrS,
    LrSa,
}

/// The assembled model. The parameter vector is ordered
/// `(u_0..u_T, v_1..v_T, psi, alpha, phi_eps, phi_eta, phi_psi, phi_alpha)`
/// under both parametrizations; only the block roles differ.
pub struct DoveModel {
    data: DoveData,
    hyper: DoveHyper,
    grid: Grid,
    phi: DMatrix<f64>,
    r_alpha: DVector<f64>,
    parametrization: DoveParametrization,
    p: usize,
    t_len: usize,
}

struct Offsets {
    v: usize,
    psi: usize,
    alpha: usize,
    phis: usize,
}

impl DoveModel {
    pub fn new(
        data: DoveData,
        hyper: DoveHyper,
        parametrization: DoveParametrization,
    ) -> Result<Self> {
        data.validate()?;
        let p = data.locations();
        let t_len = data.times();
        if t_len == 0 || p == 0 {
            return Err(Error::invalid("need at least one location and time"));
        }
        let grid = Grid::from_coords(&data.coords)?;
        let (phi, r_alpha) = build_spatial_basis(&data.coords, hyper.l, hyper.c, hyper.kernel)?;
        Ok(DoveModel {
            data,
            hyper,
            grid,
            phi,
            r_alpha,
            parametrization,
            p,
            t_len,
        })
    }

    pub fn parametrization(&self) -> DoveParametrization {
        self.parametrization
    }

    pub fn data(&self) -> &DoveData {
        &self.data
    }

    pub fn basis(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.phi, &self.r_alpha)
    }

    fn offsets(&self) -> Offsets {
        let (p, t) = (self.p, self.t_len);
        let v = p * (t + 1);
        let psi = v + p * t;
        let alpha = psi + p;
        let phis = alpha + self.hyper.l;
        Offsets {
            v,
            psi,
            alpha,
            phis,
        }
    }

    fn u<'b>(&self, theta: &'b DVector<f64>, t: usize) -> nalgebra::DVectorView<'b, f64> {
        theta.rows(t * self.p, self.p)
    }

    fn v<'b>(&self, theta: &'b DVector<f64>, t: usize) -> nalgebra::DVectorView<'b, f64> {
        debug_assert!(t >= 1);
        theta.rows(self.offsets().v + (t - 1) * self.p, self.p)
    }
}

/// Zeta dependency graph for the LR-S parametrization of this model,
/// expressed over `(v, psi, alpha, phi_eps, phi_eta, phi_psi, phi_alpha)`.
pub fn dove_zeta_graph_lr_s(p: usize, t_len: usize, l: usize) -> ZetaGraph {
    ZetaGraph::new(
        vec![
            ZetaComponent::diagonal("v", p * t_len),
            ZetaComponent::diagonal("psi", p),
            ZetaComponent::diagonal("alpha", l),
            ZetaComponent::diagonal("phi_eps", 1),
            ZetaComponent::diagonal("phi_eta", 1),
            ZetaComponent::diagonal("phi_psi", 1),
            ZetaComponent::diagonal("phi_alpha", 1),
        ],
        vec![(2, 1), (3, 0), (4, 1), (4, 2), (5, 1), (6, 2)],
    )
}

/// Zeta dependency graph for LR-SA, where `v` has moved into the factor
/// block.
pub fn dove_zeta_graph_lr_sa(p: usize, l: usize) -> ZetaGraph {
    ZetaGraph::new(
        vec![
            ZetaComponent::diagonal("psi", p),
            ZetaComponent::diagonal("alpha", l),
            ZetaComponent::diagonal("phi_eps", 1),
            ZetaComponent::diagonal("phi_eta", 1),
            ZetaComponent::diagonal("phi_psi", 1),
            ZetaComponent::diagonal("phi_alpha", 1),
        ],
        vec![(1, 0), (3, 0), (3, 1), (4, 0), (5, 1)],
    )
}

impl Model for DoveModel {
    fn state_dim(&self) -> usize {
        self.p
    }

    fn n_states(&self) -> usize {
        self.t_len + 1
    }

    fn second_chain(&self) -> Option<(usize, usize)> {
        match self.parametrization {
            DoveParametrization::LrS => None,
            DoveParametrization::LrSa => Some((self.p, self.t_len)),
        }
    }

    fn zeta_graph(&self) -> ZetaGraph {
        match self.parametrization {
            DoveParametrization::LrS => dove_zeta_graph_lr_s(self.p, self.t_len, self.hyper.l),
            DoveParametrization::LrSa => dove_zeta_graph_lr_sa(self.p, self.hyper.l),
        }
    }

    fn log_h(&self, theta: &DVector<f64>) -> Result<f64> {
        if theta.len() != self.theta_len() {
            return Err(Error::invalid("theta length mismatch"));
        }
        let off = self.offsets();
        let psi = theta.rows(off.psi, self.p).clone_owned();
        let alpha = theta.rows(off.alpha, self.hyper.l).clone_owned();
        let phi_eps = theta[off.phis];
        let phi_eta = theta[off.phis + 1];
        let phi_psi = theta[off.phis + 2];
        let phi_alpha = theta[off.phis + 3];
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let p = self.p as f64;
        let t_len = self.t_len as f64;
        let l = self.hyper.l as f64;

        // inverse-gamma priors on the variances plus the log-variance
        // Jacobians, collapsed: q ln r - ln G(q) - q phi - r e^{-phi}
        let ig = |phi: f64, (q, r): (f64, f64)| -> f64 {
            q * r.ln() - ln_gamma(q) - q * phi - r * (-phi).exp()
        };
        let mut acc = ig(phi_eps, self.hyper.ig_eps)
            + ig(phi_eta, self.hyper.ig_eta)
            + ig(phi_psi, self.hyper.ig_psi)
            + ig(phi_alpha, self.hyper.ig_alpha);

        // alpha | phi_alpha
        let mut quad_alpha = 0.0;
        let mut logdet_r = 0.0;
        for j in 0..self.hyper.l {
            quad_alpha += alpha[j] * alpha[j] / self.r_alpha[j];
            logdet_r += self.r_alpha[j].ln();
        }
        acc += -0.5 * l * ln2pi
            - 0.5 * (l * phi_alpha + logdet_r)
            - 0.5 * (-phi_alpha).exp() * quad_alpha;

        // psi | alpha, phi_psi
        let psi_resid = &psi - &self.phi * &alpha;
        acc += -0.5 * p * ln2pi - 0.5 * p * phi_psi
            - 0.5 * (-phi_psi).exp() * psi_resid.norm_squared();

        // u_0
        let u0 = self.u(theta, 0).clone_owned();
        acc += -0.5 * p * ln2pi
            - 0.5 * p * self.hyper.u0_var.ln()
            - 0.5 * u0.norm_squared() / self.hyper.u0_var;

        // transitions and emissions
        let mut quad_eta = 0.0;
        let mut quad_eps = 0.0;
        for t in 1..=self.t_len {
            let u_prev = self.u(theta, t - 1).clone_owned();
            let u_t = self.u(theta, t);
            let v_t = self.v(theta, t);
            let lap = self.grid.laplacian(&u_prev);
            for i in 0..self.p {
                let m = u_prev[i] + psi[i] * lap[i];
                let r = u_t[i] - m;
                quad_eta += r * r;
                let e = v_t[i] - u_t[i];
                quad_eps += e * e;
            }
        }
        acc += -0.5 * p * t_len * ln2pi - 0.5 * p * t_len * phi_eta
            - 0.5 * (-phi_eta).exp() * quad_eta;
        acc += -0.5 * p * t_len * ln2pi - 0.5 * p * t_len * phi_eps
            - 0.5 * (-phi_eps).exp() * quad_eps;

        // Poisson counts with mean N e^{v}
        for t in 1..=self.t_len {
            let v_t = self.v(theta, t);
            for i in 0..self.p {
                let y = self.data.counts[(i, t - 1)];
                let log_n = self.data.log_offsets[(i, t - 1)];
                let log_mean = log_n + v_t[i];
                acc += y * log_mean - log_mean.min(EXP_CLAMP).exp() - ln_gamma(y + 1.0);
            }
        }
        Ok(acc)
    }

    fn grad_log_h(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.theta_len() {
            return Err(Error::invalid("theta length mismatch"));
        }
        let off = self.offsets();
        let psi = theta.rows(off.psi, self.p).clone_owned();
        let alpha = theta.rows(off.alpha, self.hyper.l).clone_owned();
        let phi_eps = theta[off.phis];
        let phi_eta = theta[off.phis + 1];
        let phi_psi = theta[off.phis + 2];
        let phi_alpha = theta[off.phis + 3];
        let w_eps = (-phi_eps).exp();
        let w_eta = (-phi_eta).exp();
        let w_psi = (-phi_psi).exp();
        let w_alpha = (-phi_alpha).exp();
        let p = self.p as f64;
        let t_len = self.t_len as f64;
        let l = self.hyper.l as f64;

        let mut grad = DVector::zeros(theta.len());
        let mut quad_eta = 0.0;
        let mut quad_eps = 0.0;

        // residuals r_t = u_t - m_t and emission residuals
        let mut resid = Vec::with_capacity(self.t_len);
        let mut laps = Vec::with_capacity(self.t_len);
        for t in 1..=self.t_len {
            let u_prev = self.u(theta, t - 1).clone_owned();
            let u_t = self.u(theta, t);
            let lap = self.grid.laplacian(&u_prev);
            let mut r = DVector::zeros(self.p);
            for i in 0..self.p {
                r[i] = u_t[i] - (u_prev[i] + psi[i] * lap[i]);
                quad_eta += r[i] * r[i];
            }
            resid.push(r);
            laps.push(lap);
        }

        // u gradients
        for t in 0..=self.t_len {
            let mut g = DVector::zeros(self.p);
            if t == 0 {
                let u0 = self.u(theta, 0).clone_owned();
                g -= u0 / self.hyper.u0_var;
            } else {
                g.axpy(-w_eta, &resid[t - 1], 1.0);
                let v_t = self.v(theta, t);
                let u_t = self.u(theta, t);
                for i in 0..self.p {
                    let e = v_t[i] - u_t[i];
                    quad_eps += e * e;
                    g[i] += w_eps * e;
                }
            }
            if t < self.t_len {
                // J^T x = x + Delta (psi .* x) for the next transition
                let x = &resid[t] * w_eta;
                let px = psi.component_mul(&x);
                let back = self.grid.laplacian(&px);
                g += x + back;
            }
            let mut view = grad.rows_mut(t * self.p, self.p);
            for i in 0..self.p {
                view[i] += g[i];
            }
        }

        // v gradients
        for t in 1..=self.t_len {
            let v_t = self.v(theta, t);
            let u_t = self.u(theta, t);
            for i in 0..self.p {
                let y = self.data.counts[(i, t - 1)];
                let log_n = self.data.log_offsets[(i, t - 1)];
                let mean = (log_n + v_t[i]).min(EXP_CLAMP).exp();
                grad[off.v + (t - 1) * self.p + i] =
                    (y - mean) - w_eps * (v_t[i] - u_t[i]);
            }
        }

        // psi
        let psi_resid = &psi - &self.phi * &alpha;
        {
            let mut g = -w_psi * &psi_resid;
            for t in 1..=self.t_len {
                for i in 0..self.p {
                    g[i] += w_eta * resid[t - 1][i] * laps[t - 1][i];
                }
            }
            grad.rows_mut(off.psi, self.p).copy_from(&g);
        }

        // alpha
        {
            let mut g = self.phi.transpose() * (&psi_resid * w_psi);
            for j in 0..self.hyper.l {
                g[j] -= w_alpha * alpha[j] / self.r_alpha[j];
            }
            grad.rows_mut(off.alpha, self.hyper.l).copy_from(&g);
        }

        // log-variance parameters: prior part -q + r e^{-phi}, then the
        // Gaussian-block parts
        let ig_grad = |phi: f64, (q, r): (f64, f64)| -> f64 { -q + r * (-phi).exp() };
        grad[off.phis] =
            ig_grad(phi_eps, self.hyper.ig_eps) - 0.5 * p * t_len + 0.5 * w_eps * quad_eps;
        grad[off.phis + 1] =
            ig_grad(phi_eta, self.hyper.ig_eta) - 0.5 * p * t_len + 0.5 * w_eta * quad_eta;
        grad[off.phis + 2] = ig_grad(phi_psi, self.hyper.ig_psi) - 0.5 * p
            + 0.5 * w_psi * psi_resid.norm_squared();
        let quad_alpha: f64 = (0..self.hyper.l)
            .map(|j| alpha[j] * alpha[j] / self.r_alpha[j])
            .sum();
        grad[off.phis + 3] =
            ig_grad(phi_alpha, self.hyper.ig_alpha) - 0.5 * l + 0.5 * w_alpha * quad_alpha;

        Ok(grad)
    }
}
