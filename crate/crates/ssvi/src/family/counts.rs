//! Variational parameter counting per block.

use super::layout::{FactorLayout, MeanMode};

/// Number of free variational parameters per block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCounts {
    pub mu: usize,
    pub b: usize,
    pub d: usize,
    pub c1: usize,
    pub c2: usize,
}

impl ParamCounts {
    pub fn total(&self) -> usize {
        self.mu + self.b + self.d + self.c1 + self.c2
    }
}

/// Entries of a banded lower-triangular factor of dimension `n` with `bw`
/// subdiagonals.
fn band_count(n: usize, bw: usize) -> usize {
    let bw = bw.min(n.saturating_sub(1));
    n * (bw + 1) - bw * (bw + 1) / 2
}

/// Counts the free parameters of the family for a given layout and the mask
/// size of the static-parameter factor.
pub fn count_params(layout: &FactorLayout, c2_mask_len: usize) -> ParamCounts {
    let mu = match layout.mean_mode {
        MeanMode::LdSm => layout.rho_len(),
        MeanMode::HdSm => layout.theta_len(),
    };
    let b: usize = layout.chains().iter().map(|c| c.b_count()).sum();
    let d = layout.state_len();

    // chain 1 carries the band; a second chain adds per-time triangular
    // diagonal blocks plus triangular cross blocks coupling the chains
    let c = layout.chain;
    let mut c1 = band_count(c.factor_len(), c.q);
    if let Some(c2) = layout.chain2 {
        if c2.n_states > 0 && c2.q > 0 {
            c1 += c2.n_states * (c2.q * (c2.q + 1) / 2);
            c1 += c2.n_states * (c.q * (c.q + 1) / 2);
        }
    }

    ParamCounts {
        mu,
        b,
        d,
        c1,
        c2: c2_mask_len,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::layout::ChainDims;

    #[test]
    fn band_count_examples() {
        assert_eq!(band_count(76, 4), 370);
        assert_eq!(band_count(400, 4), 1990);
        assert_eq!(band_count(3, 5), 6); // clamped to full triangle
    }

    #[test]
    fn dove_lr_s_counts() {
        let zeta = 111 * 18 + 111 + 1 + 4;
        let ld = FactorLayout::lr_s(111, 4, 19, zeta, MeanMode::LdSm);
        let c = count_params(&ld, 4447);
        assert_eq!(
            (c.mu, c.b, c.d, c.c1, c.c2, c.total()),
            (2190, 438, 2109, 370, 4447, 9554)
        );
        let hd = FactorLayout::lr_s(111, 4, 19, zeta, MeanMode::HdSm);
        let c = count_params(&hd, 4447);
        assert_eq!((c.mu, c.total()), (4223, 11587));
    }

    #[test]
    fn dove_lr_sa_counts() {
        let u = ChainDims { p: 111, q: 4, n_states: 19 };
        let v = ChainDims { p: 111, q: 4, n_states: 18 };
        let zeta = 111 + 1 + 4;
        let ld = FactorLayout::lr_sa(u, v, zeta, MeanMode::LdSm);
        let c = count_params(&ld, 451);
        assert_eq!(
            (c.mu, c.b, c.d, c.c1, c.c2, c.total()),
            (264, 876, 4107, 730, 451, 6428)
        );
        let hd = FactorLayout::lr_sa(u, v, zeta, MeanMode::HdSm);
        let c = count_params(&hd, 451);
        assert_eq!((c.mu, c.total()), (4223, 10387));
    }

    #[test]
    fn wishart_counts() {
        let m1_ld = FactorLayout::lr_s(15, 4, 100, 17, MeanMode::LdSm);
        let c = count_params(&m1_ld, 48);
        assert_eq!(
            (c.mu, c.b, c.d, c.c1, c.c2, c.total()),
            (417, 54, 1500, 1990, 48, 4009)
        );
        let m1_hd = FactorLayout::lr_s(15, 4, 100, 17, MeanMode::HdSm);
        assert_eq!(count_params(&m1_hd, 48).total(), 5109);
        let m2_ld = FactorLayout::lr_s(78, 4, 100, 80, MeanMode::LdSm);
        let c = count_params(&m2_ld, 237);
        assert_eq!(
            (c.mu, c.b, c.d, c.c1, c.c2, c.total()),
            (480, 306, 7800, 1990, 237, 10813)
        );
    }
}
