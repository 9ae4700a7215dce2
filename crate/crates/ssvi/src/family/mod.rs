//! The dynamic-factor Gaussian variational family.

mod counts;
mod engine;
mod graph;
mod layout;
mod params;

pub use counts::{count_params, ParamCounts};
pub use engine::{
    blocks, elbo_estimate, grad_roeder, grad_standard, log_q, sample_theta, Block, Estimator,
    Family,
};
pub use graph::{ZetaComponent, ZetaGraph};
pub use layout::{ChainDims, FactorLayout, MeanMode, Structure};
pub use params::{
    lr_sa_c1_mask, BlockRanges, GradientSet, NoiseDraw, StateChol, VariationalParams,
};
