//! Discrete `Cᵐ` norms: sup of the field and its finite-difference derivatives.

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, ScalarField, VectorField, C64};
use crate::stencil::diff_multi;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmNorm {
    pub order: usize,
    pub value: f64,
}

/// Fields whose components can be differentiated node by node.
pub trait Components {
    fn grid(&self) -> &Grid;
    fn component_slices(&self) -> Vec<&[C64]>;
}

impl Components for ScalarField {
    fn grid(&self) -> &Grid {
        ScalarField::grid(self)
    }
    fn component_slices(&self) -> Vec<&[C64]> {
        vec![self.values()]
    }
}

impl Components for VectorField {
    fn grid(&self) -> &Grid {
        VectorField::grid(self)
    }
    fn component_slices(&self) -> Vec<&[C64]> {
        self.components().iter().map(|c| c.as_slice()).collect()
    }
}

/// Multi-indices `α` with `|α| = k`.
pub fn multi_indices(k: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    for a in (0..=k).rev() {
        for b in (0..=k - a).rev() {
            out.push([a, b, k - a - b]);
        }
    }
    out
}

/// `max_{|α| ≤ m} max_{x} |∂^α F(x)|`, with `|·|` the Euclidean norm over components.
///
/// Values are taken over `mask`; derivatives of order `k` over `mask` eroded
/// by `2k` cells so that every stencil stays inside the mask.
pub fn discrete_cm_norm<F: Components>(field: &F, m: usize, mask: &Mask) -> Result<CmNorm> {
    if m > 3 {
        return Err(Error::NormOrder(m));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let grid = *field.grid();
    if !grid.same_as(mask.grid()) {
        return Err(Error::Field("mask and field grids differ".into()));
    }
    let comps = field.component_slices();
    let mut value: f64 = 0.0;
    for k in 0..=m {
        let nodes = mask.erode(2 * k).indices();
        if nodes.is_empty() {
            continue;
        }
        for alpha in multi_indices(k) {
            let derivs: Vec<Vec<C64>> = comps.iter().map(|c| diff_multi(c, &grid, alpha)).collect();
            for &i in &nodes {
                let s: f64 = derivs.iter().map(|d| d[i].norm_sqr()).sum();
                value = value.max(s.sqrt());
            }
        }
    }
    Ok(CmNorm { order: m, value })
}

/// Cᵐ norm of a set of fields treated as one stacked vector field.
pub fn discrete_cm_norm_many<F: Components>(fields: &[F], m: usize, mask: &Mask) -> Result<CmNorm> {
    let mut value: f64 = 0.0;
    for f in fields {
        value = value.max(discrete_cm_norm(f, m, mask)?.value);
    }
    Ok(CmNorm { order: m, value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(0).len(), 1);
        assert_eq!(multi_indices(1).len(), 3);
        assert_eq!(multi_indices(2).len(), 6);
        assert_eq!(multi_indices(3).len(), 10);
    }

    #[test]
    fn constant_field() {
        let g = Grid::periodic(16).unwrap();
        let f = ScalarField::constant(g, C64::new(3.0, 4.0));
        let mask = Mask::from_fn(g, |x| x.iter().all(|v| v.abs() < 1.5));
        for m in 0..=3 {
            let n = discrete_cm_norm(&f, m, &mask).unwrap();
            assert!((n.value - 5.0).abs() < 1e-9, "{m} {}", n.value);
        }
    }

    #[test]
    fn linear_field() {
        let g = Grid::periodic(32).unwrap();
        let f = ScalarField::from_real_fn(g, |x| x[2]);
        let mask = Mask::from_fn(g, |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2] < 0.64);
        let m0 = discrete_cm_norm(&f, 0, &mask).unwrap().value;
        let m1 = discrete_cm_norm(&f, 1, &mask).unwrap().value;
        assert!(m0 < 0.8);
        assert!((m1 - m0.max(1.0)).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_and_bad_order() {
        let g = Grid::periodic(16).unwrap();
        let f = ScalarField::zeros(g);
        let empty = Mask::from_fn(g, |_| false);
        assert!(matches!(discrete_cm_norm(&f, 0, &empty), Err(Error::EmptyMask)));
        assert!(matches!(
            discrete_cm_norm(&f, 4, &Mask::full(g)),
            Err(Error::NormOrder(4))
        ));
    }
}
