//! Fourth-order central finite differences with periodic wrap.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, ScalarField, VectorField, C64};
use rayon::prelude::*;

const D1: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const D2: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];
const D3: [f64; 7] = [0.125, -1.0, 1.625, 0.0, -1.625, 1.0, -0.125];

/// Largest per-axis offset used by [`diff_axis`] for a derivative of the given order.
pub fn reach(order: usize) -> usize {
    match order {
        0 => 0,
        1 | 2 => 2,
        _ => 3,
    }
}

/// `∂ᵒʳᵈᵉʳ/∂x_axis^order` of one component, order 0..=3.
pub fn diff_axis(values: &[C64], grid: &Grid, axis: usize, order: usize) -> Vec<C64> {
    let (coefs, scale): (&[f64], f64) = match order {
        0 => return values.to_vec(),
        1 => (&D1, 1.0 / grid.spacing()),
        2 => (&D2, 1.0 / grid.spacing().powi(2)),
        3 => (&D3, 1.0 / grid.spacing().powi(3)),
        _ => panic!("derivative order {order} not supported"),
    };
    let n = grid.n();
    let half = (coefs.len() / 2) as isize;
    let stride = [1usize, n, n * n][axis];
    let mut out = vec![C64::new(0.0, 0.0); values.len()];
    out.par_chunks_mut(n * n).enumerate().for_each(|(k, slab)| {
        for (local, o) in slab.iter_mut().enumerate() {
            let flat = local + k * n * n;
            let pos = [local % n, local / n, k][axis] as isize;
            let base = flat - pos as usize * stride;
            let mut acc = C64::new(0.0, 0.0);
            for (t, &c) in coefs.iter().enumerate() {
                if c == 0.0 {
                    continue;
                }
                let p = (pos + t as isize - half).rem_euclid(n as isize) as usize;
                acc += values[base + p * stride] * c;
            }
            *o = acc * scale;
        }
    });
    out
}

/// Applies a mixed derivative `∂^α` with `α = (a₀, a₁, a₂)`.
pub fn diff_multi(values: &[C64], grid: &Grid, alpha: [usize; 3]) -> Vec<C64> {
    let mut cur: Option<Vec<C64>> = None;
    for (axis, &order) in alpha.iter().enumerate() {
        if order > 0 {
            let src = cur.as_deref().unwrap_or(values);
            cur = Some(diff_axis(src, grid, axis, order));
        }
    }
    cur.unwrap_or_else(|| values.to_vec())
}

fn add_all(parts: Vec<Vec<C64>>) -> Vec<C64> {
    let mut it = parts.into_iter();
    let mut acc = it.next().unwrap_or_default();
    for p in it {
        acc.par_iter_mut().zip(p.par_iter()).for_each(|(a, &b)| *a += b);
    }
    acc
}

pub fn grad(f: &ScalarField) -> VectorField {
    let g = *f.grid();
    let comps = [0, 1, 2].map(|a| diff_axis(f.values(), &g, a, 1));
    VectorField::from_components(g, comps).expect("same grid")
}

pub fn div(v: &VectorField) -> ScalarField {
    let g = *v.grid();
    let parts = (0..3).map(|a| diff_axis(v.component(a), &g, a, 1)).collect();
    ScalarField::from_values(g, add_all(parts)).expect("same grid")
}

pub fn curl(v: &VectorField) -> VectorField {
    let g = *v.grid();
    let d = |c: usize, a: usize| diff_axis(v.component(c), &g, a, 1);
    let sub = |a: Vec<C64>, b: Vec<C64>| a.iter().zip(&b).map(|(x, y)| x - y).collect::<Vec<_>>();
    let comps = [sub(d(2, 1), d(1, 2)), sub(d(0, 2), d(2, 0)), sub(d(1, 0), d(0, 1))];
    VectorField::from_components(g, comps).expect("same grid")
}

/// Rows `J[k] = ∇v_k`, so `J[k].component(i) = ∂ᵢ v_k`.
pub fn jacobian(v: &VectorField) -> [VectorField; 3] {
    [0, 1, 2].map(|k| grad(&component_field(v, k)))
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let g = *f.grid();
    ScalarField::from_values(g, laplacian_values(f.values(), &g)).expect("same grid")
}

pub fn laplacian_values(values: &[C64], g: &Grid) -> Vec<C64> {
    add_all((0..3).map(|a| diff_axis(values, g, a, 2)).collect())
}

pub fn vector_laplacian(v: &VectorField) -> VectorField {
    let g = *v.grid();
    let comps = [0, 1, 2].map(|c| laplacian_values(v.component(c), &g));
    VectorField::from_components(g, comps).expect("same grid")
}

/// `∇(∇·v)`, with pure second derivatives taken by the second-difference stencil.
pub fn grad_div(v: &VectorField) -> VectorField {
    let g = *v.grid();
    let first: Vec<Vec<C64>> = (0..3).map(|k| diff_axis(v.component(k), &g, k, 1)).collect();
    let comps = [0, 1, 2].map(|i| {
        let mut parts = vec![diff_axis(v.component(i), &g, i, 2)];
        for (k, fk) in first.iter().enumerate() {
            if k != i {
                parts.push(diff_axis(fk, &g, i, 1));
            }
        }
        add_all(parts)
    });
    VectorField::from_components(g, comps).expect("same grid")
}

pub fn component_field(v: &VectorField, c: usize) -> ScalarField {
    ScalarField::from_values(*v.grid(), v.component(c).to_vec()).expect("same grid")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StencilOp {
    Grad,
    Div,
    Curl,
    Jacobian,
    Laplacian,
    GradDiv,
}

/// Result of [`apply_stencil`]; the Jacobian is a 3×3 tensor field.
#[derive(Clone, Debug, PartialEq)]
pub enum StencilOutput {
    Scalar(ScalarField),
    Vector(VectorField),
    Tensor(Box<[VectorField; 3]>),
}

/// Dispatches a differential operator on a scalar or vector field.
pub fn apply_stencil(field: &Field, op: StencilOp) -> Result<StencilOutput> {
    use StencilOp::*;
    Ok(match (field, op) {
        (Field::Scalar(f), Grad) => StencilOutput::Vector(grad(f)),
        (Field::Scalar(f), Laplacian) => StencilOutput::Scalar(laplacian(f)),
        (Field::Vector(v), Div) => StencilOutput::Scalar(div(v)),
        (Field::Vector(v), Curl) => StencilOutput::Vector(curl(v)),
        (Field::Vector(v), Jacobian) => StencilOutput::Tensor(Box::new(jacobian(v))),
        (Field::Vector(v), Laplacian) => StencilOutput::Vector(vector_laplacian(v)),
        (Field::Vector(v), GradDiv) => StencilOutput::Vector(grad_div(v)),
        (f, op) => {
            return Err(Error::Field(format!(
                "{op:?} is not defined for a {}-component field",
                f.component_count()
            )))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::cnorm;

    fn grid() -> Grid {
        Grid::periodic(32).unwrap()
    }

    fn plane(k: [f64; 3]) -> ScalarField {
        ScalarField::from_fn(grid(), move |x| {
            C64::new(0.0, k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).exp()
        })
    }

    fn max_diff(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn grad_of_plane_wave() {
        let f = plane([1.0, 0.0, 0.0]);
        let g = grad(&f);
        let want: Vec<C64> = f.values().iter().map(|v| v * C64::i()).collect();
        let h4 = grid().spacing().powi(4);
        assert!(max_diff(g.component(0), &want) < h4);
        assert!(g.component(1).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn curl_of_transverse_wave() {
        let f = plane([1.0, 0.0, 0.0]);
        let z = vec![C64::new(0.0, 0.0); f.values().len()];
        let v = VectorField::from_components(*f.grid(), [z.clone(), z, f.values().to_vec()]).unwrap();
        let c = curl(&v);
        let want: Vec<C64> = f.values().iter().map(|v| -v * C64::i()).collect();
        assert!(max_diff(c.component(1), &want) < grid().spacing().powi(4));
        assert!(c.component(0).iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn fourth_order_convergence_of_laplacian() {
        // exact symbol of the stencil vs the continuum symbol -|k|²
        let err = |n: usize| {
            let g = Grid::periodic(n).unwrap();
            let f = ScalarField::from_fn(g, |x| C64::new(0.0, x[0] + 2.0 * x[1]).exp());
            let l = laplacian(&f);
            let want: Vec<C64> = f.values().iter().map(|v| v * -5.0).collect();
            max_diff(l.values(), &want)
        };
        let (e1, e2) = (err(16), err(32));
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.3, "order {order}");
    }

    #[test]
    fn curl_grad_and_div_curl_vanish() {
        let g = grid();
        let f = ScalarField::from_real_fn(g, |x| (x[0] + 0.3).sin() * (2.0 * x[1]).cos() * x[2].sin());
        let cg = curl(&grad(&f));
        let m = (0..3)
            .map(|c| cg.component(c).iter().map(|v| v.norm()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        assert!(m < 1e-12, "{m}");
        let v = VectorField::from_fn(g, |x| {
            [x[1].sin().into(), (x[2] * 2.0).cos().into(), (x[0] - x[1]).sin().into()]
        });
        let dc = div(&curl(&v));
        assert!(dc.values().iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn grad_div_matches_composition_for_low_modes() {
        let g = grid();
        let v = VectorField::from_fn(g, |x| {
            [x[1].sin().into(), (x[0] + x[2]).cos().into(), x[0].sin().into()]
        });
        let a = grad_div(&v);
        let b = grad(&div(&v));
        for c in 0..3 {
            assert!(max_diff(a.component(c), b.component(c)) < 1e-3);
        }
        let p = g.index(3, 7, 11);
        assert!(cnorm(a.at(p)).is_finite());
    }

    #[test]
    fn third_derivative_stencil() {
        let g = Grid::periodic(64).unwrap();
        let f = ScalarField::from_real_fn(g, |x| x[0].sin());
        let d3 = diff_axis(f.values(), &g, 0, 3);
        let want: Vec<C64> = (0..g.node_count())
            .map(|i| C64::new(-g.point(i)[0].cos(), 0.0))
            .collect();
        assert!(max_diff(&d3, &want) < 1e-4);
    }

    #[test]
    fn dispatch_rejects_mismatched_kinds() {
        let f = Field::Scalar(plane([1.0, 0.0, 0.0]));
        assert!(apply_stencil(&f, StencilOp::Curl).is_err());
        assert!(matches!(
            apply_stencil(&f, StencilOp::Grad),
            Ok(StencilOutput::Vector(_))
        ));
    }
}
