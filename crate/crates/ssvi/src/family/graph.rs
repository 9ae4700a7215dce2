//! Conditional-independence graph over the static parameters and the
//! sparsity mask it induces on their precision Cholesky factor.

use crate::error::{Error, Result};

/// One block of the static parameter vector.
#[derive(Debug, Clone)]
pub struct ZetaComponent {
    pub name: String,
    pub size: usize,
    /// Whether the block's own lower triangle is fully parametrized; when
    /// false only its diagonal is.
    pub dense: bool,
}

impl ZetaComponent {
    pub fn diagonal(name: &str, size: usize) -> Self {
        ZetaComponent {
            name: name.to_string(),
            size,
            dense: false,
        }
    }

    pub fn dense(name: &str, size: usize) -> Self {
        ZetaComponent {
            name: name.to_string(),
            size,
            dense: true,
        }
    }
}

/// Declared dependency structure between components of zeta.
#[derive(Debug, Clone, Default)]
pub struct ZetaGraph {
    pub components: Vec<ZetaComponent>,
    /// Pairs of component indices declared dependent; order irrelevant.
    pub dependencies: Vec<(usize, usize)>,
}

impl ZetaGraph {
    pub fn new(components: Vec<ZetaComponent>, dependencies: Vec<(usize, usize)>) -> Self {
        ZetaGraph {
            components,
            dependencies,
        }
    }

    pub fn total_len(&self) -> usize {
        self.components.iter().map(|c| c.size).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut offs = Vec::with_capacity(self.components.len());
        let mut acc = 0;
        for c in &self.components {
            offs.push(acc);
            acc += c.size;
        }
        offs
    }

    /// Lower-triangular sparsity mask for the precision Cholesky factor of
    /// zeta: the full diagonal, dense lower triangles for blocks declared
    /// dense, and full rectangular blocks for declared dependencies.
    pub fn build_c2_mask(&self) -> Result<Vec<(usize, usize)>> {
        if self.components.iter().any(|c| c.size == 0) {
            return Err(Error::invalid("zeta components must have size >= 1"));
        }
        let offs = self.offsets();
        let mut mask = Vec::new();
        for (c, comp) in self.components.iter().enumerate() {
            let o = offs[c];
            for i in 0..comp.size {
                if comp.dense {
                    for j in 0..=i {
                        mask.push((o + i, o + j));
                    }
                } else {
                    mask.push((o + i, o + i));
                }
            }
        }
        for &(a, b) in &self.dependencies {
            if a >= self.components.len() || b >= self.components.len() || a == b {
                return Err(Error::invalid(format!(
                    "dependency ({a}, {b}) refers to unknown or equal components"
                )));
            }
            // the factor is lower triangular: rows come from the later block
            let (row, col) = if offs[a] > offs[b] { (a, b) } else { (b, a) };
            for i in 0..self.components[row].size {
                for j in 0..self.components[col].size {
                    mask.push((offs[row] + i, offs[col] + j));
                }
            }
        }
        mask.sort_unstable();
        mask.dedup();
        Ok(mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_gives_diagonal_mask() {
        let g = ZetaGraph::new(vec![ZetaComponent::diagonal("z", 3)], vec![]);
        let mask = g.build_c2_mask().unwrap();
        assert_eq!(mask, vec![(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn wishart_style_graph_count() {
        // H' block internally diagonal, d' row dense over H', nu' row dense
        // over H' and d'; k = 5 gives p = 15
        let g = ZetaGraph::new(
            vec![
                ZetaComponent::diagonal("H'", 15),
                ZetaComponent::diagonal("d'", 1),
                ZetaComponent::diagonal("nu'", 1),
            ],
            vec![(1, 0), (2, 0), (2, 1)],
        );
        assert_eq!(g.build_c2_mask().unwrap().len(), 48);
    }

    #[test]
    fn bad_dependency_is_rejected() {
        let g = ZetaGraph::new(vec![ZetaComponent::diagonal("a", 2)], vec![(0, 1)]);
        assert!(g.build_c2_mask().is_err());
    }
}
