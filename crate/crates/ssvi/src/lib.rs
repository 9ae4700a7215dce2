//! Gaussian variational inference for high-dimensional state space models.
//!
//! The variational family is a multivariate Gaussian whose covariance is
//! parametrized by a dynamic factor structure: a low-rank loading matrix `B`
//! maps a chain of latent factors `z_t` into state space, while the precision
//! matrix of the factors is parametrized through a banded Cholesky factor so
//! that the factors keep a Markovian dependence structure in time. Static
//! parameters get their own sparse precision Cholesky factor whose pattern is
//! read off the model's conditional independence graph.
//!
//! The crate is organized as:
//!
//! - [`matcalc`] — structured linear-algebra kernels (banded and sparse
//!   triangular factors, Woodbury solves, vech/elimination/duplication/
//!   commutation machinery, symmetric eigendecompositions and fractional
//!   matrix-power derivatives);
//! - [`family`] — the variational family itself: sampling through the
//!   reparametrization trick, log-density evaluation, ELBO estimation and
//!   two unbiased gradient estimators;
//! - [`optim`] — stochastic gradient ascent with ADADELTA learning rates;
//! - [`model`] — the plug-in contract targets implement, plus test targets;
//! - [`dove`] — a spatio-temporal Poisson diffusion model;
//! - [`wishart`] — a Wishart-process multivariate stochastic volatility model;
//! - [`lgssm`] — an exact linear-Gaussian oracle (Kalman filter/smoother);
//! - [`reference`] — dense reference implementations used for verification.

pub mod dove;
pub mod error;
pub mod family;
pub mod lgssm;
pub mod matcalc;
pub mod model;
pub mod optim;
pub mod reference;
pub mod wishart;

pub use error::{Error, Result};
