//! Regular-grid adjacency and the diffusion operator of the latent process.

use crate::error::{Error, Result};
use nalgebra::DVector;

/// 4-neighbor adjacency over grid locations, with reflecting boundaries.
#[derive(Debug, Clone)]
pub struct Grid {
    neighbors: Vec<Vec<usize>>,
}

impl Grid {
    /// Builds adjacency by matching integer-rounded coordinates; locations
    /// are neighbors when they differ by one step along exactly one axis.
    pub fn from_coords(coords: &[(f64, f64)]) -> Result<Self> {
        let cells: Vec<(i64, i64)> = coords
            .iter()
            .map(|&(a, b)| (a.round() as i64, b.round() as i64))
            .collect();
        let mut seen = std::collections::HashMap::new();
        for (idx, &c) in cells.iter().enumerate() {
            if seen.insert(c, idx).is_some() {
                return Err(Error::invalid("duplicate grid coordinates"));
            }
        }
        let neighbors = cells
            .iter()
            .map(|&(a, b)| {
                [(a - 1, b), (a + 1, b), (a, b - 1), (a, b + 1)]
                    .iter()
                    .filter_map(|key| seen.get(key).copied())
                    .collect()
            })
            .collect();
        Ok(Grid { neighbors })
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    /// Graph Laplacian `(Delta u)_i = sum_{j ~ i} (u_j - u_i)`.
    pub fn laplacian(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(u.len());
        for (i, ns) in self.neighbors.iter().enumerate() {
            let mut s = 0.0;
            for &j in ns {
                s += u[j] - u[i];
            }
            out[i] = s;
        }
        out
    }
}

/// Diagonal of the diffusion operator `G(u) = diag(Delta u)`, so that
/// `H(psi) u = u + G(u) psi` is linear in `psi`.
pub fn diffusion_operator(u: &DVector<f64>, grid: &Grid) -> DVector<f64> {
    grid.laplacian(u)
}
