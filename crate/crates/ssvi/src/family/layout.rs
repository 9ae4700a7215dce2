//! Dimensions and structural switches of the variational family.

use crate::error::{Error, Result};

/// How the state mean is parametrized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanMode {
    /// Low-dimensional state mean: `E(X_t) = B mu_t` with `mu_t` in factor
    /// space.
    LdSm,
    /// High-dimensional state mean: a free `p`-dimensional mean per time.
    HdSm,
}

/// Which blocks receive the low-rank factor treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Structure {
    /// Only the state chain is low-rank.
    LrS,
    /// State chain plus a high-dimensional auxiliary chain.
    LrSa,
}

/// Dimensions of one factor chain: `n_states` blocks of state dimension `p`
/// loaded from `q` factors each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainDims {
    pub p: usize,
    pub q: usize,
    pub n_states: usize,
}

impl ChainDims {
    pub fn state_len(&self) -> usize {
        self.p * self.n_states
    }

    pub fn factor_len(&self) -> usize {
        self.q * self.n_states
    }

    /// Free entries of the loading matrix with the upper triangle pinned to
    /// zero for identifiability.
    pub fn b_count(&self) -> usize {
        self.p * self.q - self.q * (self.q - 1) / 2
    }
}

/// Dimensions and switches of the dynamic factor family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorLayout {
    pub chain: ChainDims,
    /// Second chain, present only under [`Structure::LrSa`].
    pub chain2: Option<ChainDims>,
    /// Static-parameter dimension.
    pub zeta: usize,
    pub mean_mode: MeanMode,
}

impl FactorLayout {
    pub fn lr_s(p: usize, q: usize, n_states: usize, zeta: usize, mean_mode: MeanMode) -> Self {
        FactorLayout {
            chain: ChainDims { p, q, n_states },
            chain2: None,
            zeta,
            mean_mode,
        }
    }

    pub fn lr_sa(chain: ChainDims, chain2: ChainDims, zeta: usize, mean_mode: MeanMode) -> Self {
        FactorLayout {
            chain,
            chain2: Some(chain2),
            zeta,
            mean_mode,
        }
    }

    pub fn structure(&self) -> Structure {
        if self.chain2.is_some() {
            Structure::LrSa
        } else {
            Structure::LrS
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut chains = vec![self.chain];
        if let Some(c2) = self.chain2 {
            chains.push(c2);
        }
        for (idx, c) in chains.iter().enumerate() {
            if idx == 0 && (c.p == 0 || c.q == 0 || c.n_states == 0) {
                return Err(Error::invalid("primary chain dimensions must be >= 1"));
            }
            if c.q > c.p {
                return Err(Error::invalid(format!(
                    "factor dimension q={} exceeds state dimension p={}",
                    c.q, c.p
                )));
            }
        }
        if let Some(c2) = self.chain2 {
            // the cross-coupling blocks in the factor Cholesky are q x q
            if c2.q != 0 && c2.q != self.chain.q {
                return Err(Error::invalid(
                    "second chain must share the factor dimension q of the first",
                ));
            }
        }
        Ok(())
    }

    /// Chains in block order (chain 1, then chain 2 when present).
    pub fn chains(&self) -> Vec<ChainDims> {
        let mut v = vec![self.chain];
        if let Some(c2) = self.chain2 {
            if c2.n_states > 0 && c2.p > 0 {
                v.push(c2);
            }
        }
        v
    }

    /// Total state dimension `p * n_states` summed over chains.
    pub fn state_len(&self) -> usize {
        self.chains().iter().map(|c| c.state_len()).sum()
    }

    /// Total factor dimension `q * n_states` summed over chains.
    pub fn factor_len(&self) -> usize {
        self.chains().iter().map(|c| c.factor_len()).sum()
    }

    /// Dimension of theta = (states, zeta).
    pub fn theta_len(&self) -> usize {
        self.state_len() + self.zeta
    }

    /// Dimension of rho = (factors, zeta).
    pub fn rho_len(&self) -> usize {
        self.factor_len() + self.zeta
    }

    /// Length of the variational mean vector.
    pub fn mu_len(&self) -> usize {
        match self.mean_mode {
            MeanMode::LdSm => self.rho_len(),
            MeanMode::HdSm => self.theta_len(),
        }
    }

    /// Offset of each chain's state block inside theta.
    pub fn state_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::new();
        let mut acc = 0;
        for c in self.chains() {
            offs.push(acc);
            acc += c.state_len();
        }
        offs
    }

    /// Offset of each chain's factor block inside rho.
    pub fn factor_offsets(&self) -> Vec<usize> {
        let mut offs = Vec::new();
        let mut acc = 0;
        for c in self.chains() {
            offs.push(acc);
            acc += c.factor_len();
        }
        offs
    }
}
