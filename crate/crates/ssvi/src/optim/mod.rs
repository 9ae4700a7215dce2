//! Stochastic gradient ascent (sequential block updates with ADADELTA
//! learning rates), ELBO monitoring and trace export.

use crate::error::{Error, Result};
use crate::family::{Estimator, FactorLayout, Family, GradientSet, NoiseDraw, VariationalParams};
use crate::model::Model;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

/// Per-scalar ADADELTA accumulators.
#[derive(Debug, Clone)]
pub struct AdadeltaState {
    pub eg2: Vec<f64>,
    pub ed2: Vec<f64>,
    pub rho: f64,
    pub eps: f64,
}

impl AdadeltaState {
    pub fn new(n: usize, rho: f64, eps: f64) -> Self {
        AdadeltaState {
            eg2: vec![0.0; n],
            ed2: vec![0.0; n],
            rho,
            eps,
        }
    }

    /// One accumulator update for scalar `idx`; returns the ascent step.
    pub fn step(&mut self, idx: usize, g: f64) -> f64 {
        self.eg2[idx] = self.rho * self.eg2[idx] + (1.0 - self.rho) * g * g;
        let delta = ((self.ed2[idx] + self.eps) / (self.eg2[idx] + self.eps)).sqrt() * g;
        self.ed2[idx] = self.rho * self.ed2[idx] + (1.0 - self.rho) * delta * delta;
        delta
    }
}

/// Applies the ADADELTA recurrence to a whole gradient vector, returning the
/// ascent steps.
pub fn adadelta_step(g: &[f64], state: &mut AdadeltaState) -> Vec<f64> {
    g.iter()
        .enumerate()
        .map(|(i, &gi)| state.step(i, gi))
        .collect()
}

/// Optimizer configuration.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub iterations: usize,
    /// Monte Carlo samples per gradient estimate.
    pub samples: usize,
    pub estimator: Estimator,
    /// Record a trace row every `monitor_stride` iterations.
    pub monitor_stride: usize,
    /// Monte Carlo samples for the final ELBO estimate.
    pub final_samples: usize,
    pub seed: u64,
    /// Reuse one noise draw across the four block updates of an iteration
    /// instead of drawing fresh noise per sub-step.
    pub shared_draw: bool,
    pub rho_ad: f64,
    pub eps_ad: f64,
    /// Worker threads for multi-sample gradient evaluation; the reduction
    /// order is fixed so results do not depend on this.
    pub threads: usize,
}

impl FitConfig {
    pub fn new(iterations: usize) -> Self {
        FitConfig {
            iterations,
            samples: 1,
            estimator: Estimator::Roeder,
            monitor_stride: 10,
            final_samples: 100,
            seed: 0,
            shared_draw: false,
            rho_ad: 0.95,
            eps_ad: 1e-6,
            threads: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.samples == 0 {
            return Err(Error::invalid("iterations and samples must be >= 1"));
        }
        if self.monitor_stride == 0 {
            return Err(Error::invalid("monitor stride must be >= 1"));
        }
        if !(0.0 < self.rho_ad && self.rho_ad < 1.0) || self.eps_ad <= 0.0 {
            return Err(Error::invalid("ADADELTA constants out of range"));
        }
        Ok(())
    }
}

/// One monitored iteration.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: usize,
    pub elbo: f64,
    pub grad_norm_mu: f64,
    pub grad_norm_b: f64,
    pub grad_norm_delta: f64,
    pub grad_norm_c: f64,
    pub seconds: f64,
}

/// Per-iteration ELBO estimates and gradient norms.
#[derive(Debug, Clone, Default)]
pub struct ElboTrace {
    pub rows: Vec<TraceRow>,
}

impl ElboTrace {
    pub fn csv_header() -> &'static str {
        "iteration,elbo,grad_norm_mu,grad_norm_B,grad_norm_delta,grad_norm_C,seconds"
    }
}

fn divergence_snapshot(par: &VariationalParams) -> String {
    let flat = par.to_flat();
    let max = flat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let non_finite = flat.iter().filter(|v| !v.is_finite()).count();
    format!(
        "mu norm {:.3e}, delta norm {:.3e}, max |param| {:.3e}, non-finite entries {}",
        par.mu.norm(),
        par.delta.norm(),
        max,
        non_finite
    )
}

/// Averaged gradient over pre-drawn noises; the summation order is fixed
/// regardless of thread count.
fn averaged_gradient(
    fam: &Family,
    model: &dyn Model,
    draws: &[NoiseDraw],
    estimator: Estimator,
    threads: usize,
) -> Result<GradientSet> {
    let results: Vec<Result<GradientSet>> = if threads > 1 && draws.len() > 1 {
        let chunk = draws.len().div_ceil(threads);
        std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for block in draws.chunks(chunk) {
                handles.push(scope.spawn(move || {
                    block
                        .iter()
                        .map(|u| fam.grad(model, u, estimator))
                        .collect::<Vec<_>>()
                }));
            }
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("gradient worker panicked"))
                .collect()
        })
    } else {
        draws
            .iter()
            .map(|u| fam.grad(model, u, estimator))
            .collect()
    };
    let mut acc: Option<GradientSet> = None;
    let w = 1.0 / draws.len() as f64;
    for r in results {
        let g = r?;
        match &mut acc {
            None => {
                let mut g0 = g;
                g0.scale(w);
                acc = Some(g0);
            }
            Some(a) => a.axpy(w, &g),
        }
    }
    Ok(acc.expect("at least one draw"))
}

/// Runs the block-sequential stochastic gradient ascent: within each
/// iteration mu, B, delta and C (C1 and C2 jointly) are updated in turn,
/// each sub-step drawing fresh noise and evaluating its gradient at the
/// partially updated parameters.
pub fn fit(
    model: &dyn Model,
    layout: &FactorLayout,
    lambda0: VariationalParams,
    config: &FitConfig,
) -> Result<(VariationalParams, ElboTrace)> {
    config.validate()?;
    let mut par = lambda0;
    par.validate(layout)?;
    let ranges = par.block_ranges();
    let blocks = [
        ranges.mu.clone(),
        ranges.b.clone(),
        ranges.delta.clone(),
        ranges.c.clone(),
    ];
    let mut ad = AdadeltaState::new(ranges.total(), config.rho_ad, config.eps_ad);
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let start = Instant::now();
    let mut trace = ElboTrace::default();

    for m in 1..=config.iterations {
        let shared: Option<Vec<NoiseDraw>> = if config.shared_draw {
            Some(
                (0..config.samples)
                    .map(|_| NoiseDraw::sample(layout, &mut rng))
                    .collect(),
            )
        } else {
            None
        };

        let mut norms = [0.0f64; 4];
        for (bi, range) in blocks.iter().enumerate() {
            let draws: Vec<NoiseDraw> = match &shared {
                Some(d) => d.clone(),
                None => (0..config.samples)
                    .map(|_| NoiseDraw::sample(layout, &mut rng))
                    .collect(),
            };
            let fam = Family::new(layout, &par).map_err(|e| Error::Diverged {
                iter: m,
                detail: format!("{e}; {}", divergence_snapshot(&par)),
            })?;
            let grad = averaged_gradient(&fam, model, &draws, config.estimator, config.threads)?;
            drop(fam);
            norms[bi] = grad.block_norms()[bi];
            if !norms[bi].is_finite() {
                return Err(Error::Diverged {
                    iter: m,
                    detail: format!(
                        "non-finite gradient in block {bi}; {}",
                        divergence_snapshot(&par)
                    ),
                });
            }
            let g_flat = grad.to_flat();
            let mut p_flat = par.to_flat();
            for idx in range.clone() {
                p_flat[idx] += ad.step(idx, g_flat[idx]);
            }
            if p_flat[range.clone()].iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    iter: m,
                    detail: format!(
                        "non-finite parameter in block {bi}; {}",
                        divergence_snapshot(&par)
                    ),
                });
            }
            par.set_from_flat(&p_flat)?;
        }

        if (m - 1) % config.monitor_stride == 0 {
            let fam = Family::new(layout, &par).map_err(|e| Error::Diverged {
                iter: m,
                detail: format!("{e}; {}", divergence_snapshot(&par)),
            })?;
            let elbo = fam.elbo_estimate(model, 1, &mut rng)?;
            if !elbo.is_finite() || elbo < -1e12 {
                return Err(Error::Diverged {
                    iter: m,
                    detail: format!("ELBO estimate {elbo}; {}", divergence_snapshot(&par)),
                });
            }
            trace.rows.push(TraceRow {
                iteration: m,
                elbo,
                grad_norm_mu: norms[0],
                grad_norm_b: norms[1],
                grad_norm_delta: norms[2],
                grad_norm_c: norms[3],
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok((par, trace))
}

/// Mean and 95% confidence interval of the single-sample ELBO at fixed
/// parameters.
pub fn final_elbo<R: Rng>(
    par: &VariationalParams,
    layout: &FactorLayout,
    model: &dyn Model,
    s_final: usize,
    rng: &mut R,
) -> Result<(f64, (f64, f64))> {
    if s_final < 2 {
        return Err(Error::invalid("final ELBO needs at least two samples"));
    }
    let fam = Family::new(layout, par)?;
    let mut vals = Vec::with_capacity(s_final);
    for _ in 0..s_final {
        vals.push(fam.elbo_estimate(model, 1, rng)?);
    }
    let mean = vals.iter().sum::<f64>() / s_final as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s_final as f64 - 1.0);
    let half = 1.96 * (var / s_final as f64).sqrt();
    Ok((mean, (mean - half, mean + half)))
}
