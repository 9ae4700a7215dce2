//! The structured engine against fully dense evaluations of the same
//! formulas, on instances small enough to materialize everything.

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use ssvi::family::{
    ChainDims, Estimator, FactorLayout, Family, GradientSet, MeanMode, NoiseDraw,
    VariationalParams,
};
use ssvi::model::{GaussianToy, Model};
use ssvi::reference::DenseFamily;

fn c2_mask(zeta: usize) -> Vec<(usize, usize)> {
    let mut mask: Vec<(usize, usize)> = (0..zeta).map(|i| (i, i)).collect();
    if zeta > 1 {
        mask.push((zeta - 1, 0));
    }
    mask
}

fn layouts() -> Vec<FactorLayout> {
    let mut out = Vec::new();
    for mode in [MeanMode::LdSm, MeanMode::HdSm] {
        out.push(FactorLayout::lr_s(3, 2, 3, 2, mode));
        out.push(FactorLayout::lr_sa(
            ChainDims { p: 3, q: 2, n_states: 3 },
            ChainDims { p: 3, q: 2, n_states: 2 },
            2,
            mode,
        ));
    }
    out
}

fn random_instance(
    layout: &FactorLayout,
    seed: u64,
) -> (VariationalParams, GaussianToy, NoiseDraw) {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut par = VariationalParams::init(layout, &c2_mask(layout.zeta)).unwrap();
    par.randomize(&mut rng, 0.4);
    par.mu
        .iter_mut()
        .for_each(|v| *v = rng.gen_range(-0.5..0.5));

    let n = layout.theta_len();
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.3..0.3));
    let cov = &a * a.transpose() + DMatrix::<f64>::identity(n, n);
    let mean = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    // only log_h/grad_log_h are exercised here, so the toy's own layout
    // hints can be a single block over all of theta
    let model = GaussianToy::new(mean, cov, 1.7, n, 1, 0).unwrap();

    let u = NoiseDraw {
        omega: DVector::from_fn(layout.rho_len(), |_, _| rng.gen_range(-1.5..1.5)),
        eps: DVector::from_fn(layout.state_len(), |_, _| rng.gen_range(-1.5..1.5)),
    };
    (par, model, u)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-9)
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

fn grad_rel(a: &GradientSet, b: &GradientSet) -> f64 {
    rel_vec(&a.to_flat(), &b.to_flat())
}

#[test]
fn sample_theta_matches_dense_transform() {
    for (i, layout) in layouts().iter().enumerate() {
        let (par, _, u) = random_instance(layout, 100 + i as u64);
        let fam = Family::new(layout, &par).unwrap();
        let dense = DenseFamily::new(layout, &par).unwrap();
        let s = fam.sample_theta(&u).unwrap();
        let d = dense.sample(&u);
        assert!(
            rel_vec(s.as_slice(), d.as_slice()) < 1e-12,
            "layout {i}: sample mismatch"
        );
    }
}

#[test]
fn log_q_matches_dense_mvn() {
    for (i, layout) in layouts().iter().enumerate() {
        let (par, _, u) = random_instance(layout, 200 + i as u64);
        let fam = Family::new(layout, &par).unwrap();
        let dense = DenseFamily::new(layout, &par).unwrap();
        let theta = fam.sample_theta(&u).unwrap();
        let lq = fam.log_q(&theta).unwrap();
        let ld = dense.log_q(&theta).unwrap();
        assert!(rel(lq, ld) < 1e-9, "layout {i}: log_q {lq} vs dense {ld}");
    }
}

#[test]
fn gradients_match_dense_formulas() {
    for (i, layout) in layouts().iter().enumerate() {
        for estimator in [Estimator::Standard, Estimator::Roeder] {
            let (par, model, u) = random_instance(layout, 300 + i as u64);
            let fam = Family::new(layout, &par).unwrap();
            let dense = DenseFamily::new(layout, &par).unwrap();
            let got = fam.grad(&model, &u, estimator).unwrap();
            let want = dense.grad(&par, &model, &u, estimator).unwrap();

            assert!(
                rel_vec(got.mu.as_slice(), want.mu.as_slice()) < 1e-9,
                "layout {i} {estimator:?}: mu mismatch"
            );
            for c in 0..got.b.len() {
                assert!(
                    rel_vec(got.b[c].as_slice(), want.b[c].as_slice()) < 1e-9,
                    "layout {i} {estimator:?}: B chain {c} mismatch\n{:?}\n{:?}",
                    got.b[c],
                    want.b[c]
                );
            }
            assert!(
                rel_vec(got.delta.as_slice(), want.delta.as_slice()) < 1e-9,
                "layout {i} {estimator:?}: delta mismatch"
            );
            assert!(
                rel_vec(&got.c1, &want.c1) < 1e-9,
                "layout {i} {estimator:?}: C1 mismatch\n{:?}\n{:?}",
                got.c1,
                want.c1
            );
            assert!(
                rel_vec(&got.c2, &want.c2) < 1e-9,
                "layout {i} {estimator:?}: C2 mismatch"
            );
            assert!(grad_rel(&got, &want) < 1e-9);
        }
    }
}

#[test]
fn empty_second_chain_reduces_to_lr_s() {
    let lr_s = FactorLayout::lr_s(3, 2, 3, 2, MeanMode::LdSm);
    let degenerate = FactorLayout::lr_sa(
        ChainDims { p: 3, q: 2, n_states: 3 },
        ChainDims { p: 0, q: 0, n_states: 0 },
        2,
        MeanMode::LdSm,
    );
    let (par, model, u) = random_instance(&lr_s, 77);

    // mirror the banded factor into the sparse representation, mapping
    // values by position (the two storages use different orders)
    let mask: Vec<(usize, usize)> = par.c1.positions();
    let sparse = ssvi::matcalc::SparseLowerTriangular::identity_from_mask(
        par.c1.dim(),
        &mask,
    )
    .unwrap();
    let by_pos: std::collections::HashMap<(usize, usize), f64> = par
        .c1
        .positions()
        .into_iter()
        .zip(par.c1.values())
        .collect();
    let vals: Vec<f64> = sparse.positions().iter().map(|p| by_pos[p]).collect();
    let mut par_sa = VariationalParams {
        mu: par.mu.clone(),
        b: par.b.clone(),
        delta: par.delta.clone(),
        c1: ssvi::family::StateChol::Sparse(sparse),
        c2: par.c2.clone(),
    };
    par_sa.c1.set_values(&vals).unwrap();

    let fam = Family::new(&lr_s, &par).unwrap();
    let fam_sa = Family::new(&degenerate, &par_sa).unwrap();
    let t1 = fam.sample_theta(&u).unwrap();
    let t2 = fam_sa.sample_theta(&u).unwrap();
    assert!((t1.clone() - &t2).norm() < 1e-13);
    assert!((fam.log_q(&t1).unwrap() - fam_sa.log_q(&t1).unwrap()).abs() < 1e-10);
    for estimator in [Estimator::Standard, Estimator::Roeder] {
        let g1 = fam.grad(&model, &u, estimator).unwrap();
        let g2 = fam_sa.grad(&model, &u, estimator).unwrap();
        // the two factor representations store values in different orders;
        // compare through their position maps
        let map1: std::collections::HashMap<(usize, usize), f64> = par
            .c1
            .positions()
            .into_iter()
            .zip(g1.c1.iter().copied())
            .collect();
        for (pos, v) in par_sa.c1.positions().into_iter().zip(g2.c1.iter()) {
            let w = map1[&pos];
            assert!((v - w).abs() < 1e-10 * w.abs().max(1.0), "{estimator:?} C1 differs at {pos:?}");
        }
        assert!(rel_vec(g2.mu.as_slice(), g1.mu.as_slice()) < 1e-10);
        assert!(rel_vec(g2.b[0].as_slice(), g1.b[0].as_slice()) < 1e-10);
        assert!(rel_vec(g2.delta.as_slice(), g1.delta.as_slice()) < 1e-10);
        assert!(rel_vec(&g2.c2, &g1.c2) < 1e-10, "{estimator:?} C2 differs");
    }
}
