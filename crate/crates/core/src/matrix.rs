//! Six-measurement reconstruction: three CGO pairs with independent limit
//! directions turn the transport equations into `∇L + ΓL = 0` on all of Ω.
//!
//! `L` is real, so each pair contributes the real equation
//! `Re β^j·∇L + Re γ^j L = 0`; with `B` the matrix of rows `Re β^j`,
//! `Γ = B⁻¹(Re γ^j)_j`. The imaginary parts give a consistency residual.

use crate::cgo::{make_zeta_eta, CgoParams};
use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::grid::{Mask, ScalarField, VectorField, C64};
use crate::interp::{Interpolant, Kernel};
use crate::transport::{BoundaryMobility, TransportField};
use crate::vec3::{axis_rotation, radd, rdot, re, rnorm, rscale, rsub, CVec, Mat3, RVec, IDENTITY};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameSet {
    pub frames: [Mat3; 3],
    pub zeta0_dirs: [CVec; 3],
    /// `[ζ₁¹, ζ₂¹, ζ₁², ζ₂², ζ₁³, ζ₂³]`
    pub params: Vec<CgoParams>,
    /// Condition number of the matrix of rows `Re ζ₀^j`.
    pub condition: f64,
}

/// Identity, 90° about `e₁`, 90° about `e₂`: `Re ζ₀^j ∝ e₃, e₂, e₁`.
pub fn default_frames() -> [Mat3; 3] {
    let q = std::f64::consts::FRAC_PI_2;
    [IDENTITY, axis_rotation(0, q), axis_rotation(1, q)]
}

/// Largest admissible condition number of the limit directions.
pub const FRAME_CONDITION_MAX: f64 = 10.0;

fn condition(m: &Matrix3<f64>) -> f64 {
    let s = m.singular_values();
    let (lo, hi) = (s.min(), s.max());
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

pub fn build_measurement_frames(k: f64, h: f64, a: f64, frames: &[Mat3; 3]) -> Result<FrameSet> {
    let mut params = Vec::with_capacity(6);
    for f in frames {
        params.push(make_zeta_eta(h, a, k, f, 1)?);
        params.push(make_zeta_eta(h, a, k, f, 2)?);
    }
    let zeta0_dirs = [0, 1, 2].map(|j| params[2 * j].zeta0());
    let rows = zeta0_dirs.map(re);
    let m = Matrix3::from_fn(|i, j| rows[i][j]);
    let c = condition(&m);
    if !(c <= FRAME_CONDITION_MAX) {
        return Err(Error::Matrix(format!(
            "limit directions are dependent (condition {c:e})"
        )));
    }
    Ok(FrameSet {
        frames: *frames,
        zeta0_dirs,
        params,
        condition: c,
    })
}

#[derive(Clone, Debug)]
pub struct GammaField {
    /// `Γ` (real, stored as complex samples).
    pub gamma: VectorField,
    pub condition: ScalarField,
    /// Nodes of the region where the condition exceeded the limit (`Γ` set to zero there).
    pub failed: usize,
    pub region_nodes: usize,
    pub max_condition: f64,
    /// `sup_j |Im β^j·Γ − Im γ^j|` relative to `‖Im β‖‖Γ‖ + ‖Im γ‖` over the region.
    pub imag_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientSystemConfig {
    pub cond_max: f64,
    /// Fraction of region nodes allowed to exceed `cond_max`.
    pub max_failure_fraction: f64,
}

impl Default for GradientSystemConfig {
    fn default() -> Self {
        GradientSystemConfig {
            cond_max: 1e3,
            max_failure_fraction: 1e-3,
        }
    }
}

/// Solves `B(x)Γ(x) = (Re γ^j(x))_j` at every node.
pub fn assemble_gradient_system(
    tfs: &[TransportField; 3],
    region: &Mask,
    cfg: &GradientSystemConfig,
) -> Result<GammaField> {
    let grid = *tfs[0].beta.grid();
    if tfs.iter().any(|t| !t.beta.grid().same_as(&grid)) {
        return Err(Error::Matrix("transport fields on different grids".into()));
    }
    let solved: Vec<(RVec, f64)> = (0..grid.node_count())
        .into_par_iter()
        .map(|n| {
            let rows = [0, 1, 2].map(|j| re(tfs[j].beta.at(n)));
            let b = Matrix3::from_fn(|i, k| rows[i][k]);
            let rhs = Vector3::from_fn(|j, _| tfs[j].gamma.values()[n].re);
            let c = condition(&b);
            if !(c <= cfg.cond_max) {
                return ([0.0; 3], c);
            }
            match b.lu().solve(&rhs) {
                Some(g) => ([g[0], g[1], g[2]], c),
                None => ([0.0; 3], f64::INFINITY),
            }
        })
        .collect();
    let idx = region.indices();
    let failed = idx.iter().filter(|&&n| !(solved[n].1 <= cfg.cond_max)).count();
    if failed as f64 > cfg.max_failure_fraction * idx.len() as f64 {
        return Err(Error::Matrix(format!(
            "condition above {} at {failed} of {} nodes",
            cfg.cond_max,
            idx.len()
        )));
    }
    let max_condition = idx.iter().map(|&n| solved[n].1).fold(0.0, f64::max);
    let (mut num, mut nb, mut ng, mut nga) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &n in &idx {
        let g = solved[n].0;
        nga = nga.max(rnorm(g));
        for t in tfs {
            let bi = crate::vec3::im(t.beta.at(n));
            let gi = t.gamma.values()[n].im;
            num = num.max((rdot(bi, g) - gi).abs());
            nb = nb.max(rnorm(bi));
            ng = ng.max(gi.abs());
        }
    }
    let denom = nb * nga + ng;
    let gamma: Vec<CVec> = solved.iter().map(|(g, _)| g.map(|v| C64::new(v, 0.0))).collect();
    let cond: Vec<C64> = solved.iter().map(|(_, c)| C64::new(*c, 0.0)).collect();
    Ok(GammaField {
        gamma: VectorField::from_nodes(grid, &gamma),
        condition: ScalarField::from_values(grid, cond)?,
        failed,
        region_nodes: idx.len(),
        max_condition,
        imag_residual: if num == 0.0 { 0.0 } else { num / denom },
    })
}

/// Which straight chord joins the boundary to each node.
///
/// The radial families are singular at the centre, so the error of `L_rec`
/// is not smooth there; parallel chords avoid this and are the default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathChoice {
    /// From the far boundary point on the line through the node and the centre.
    FarSide,
    /// From the near boundary point on the same line.
    NearSide,
    /// From the boundary point behind the node along a fixed direction.
    Direction(RVec),
}

impl Default for PathChoice {
    fn default() -> Self {
        PathChoice::Direction([0.0, 0.0, 1.0])
    }
}

impl PathChoice {
    /// A second admissible family for the path-independence check.
    pub fn companion(self) -> PathChoice {
        match self {
            PathChoice::FarSide => PathChoice::NearSide,
            PathChoice::NearSide => PathChoice::FarSide,
            PathChoice::Direction(d) => PathChoice::Direction(crate::vec3::orthogonal_unit(d)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LineIntegralConfig {
    /// Quadrature segments are at most `segment_fraction·Δ` long.
    pub segment_fraction: f64,
    pub kernel: Kernel,
}

impl Default for LineIntegralConfig {
    fn default() -> Self {
        LineIntegralConfig {
            segment_fraction: 0.125,
            kernel: Kernel::CubicBSpline,
        }
    }
}

/// `L(x) = L₀(x_b)·exp(−∫_{x_b}^{x} Γ·dℓ)` on every node of `mask`; zero elsewhere.
pub fn integrate_log_mobility(
    gamma: &GammaField,
    l0: &BoundaryMobility,
    domain: &Domain,
    mask: &Mask,
    path: PathChoice,
    cfg: &LineIntegralConfig,
) -> Result<ScalarField> {
    let grid = *domain.grid();
    let comps: [Interpolant<f64>; 3] = [0, 1, 2].map(|c| {
        let v: Vec<f64> = gamma.gamma.component(c).iter().map(|z| z.re).collect();
        Interpolant::new(grid, &v, cfg.kernel)
    });
    let shape = domain.shape();
    let center = shape.center();
    let seg = cfg.segment_fraction * grid.spacing();
    let nodes = mask.indices();
    let vals: Vec<Result<f64>> = nodes
        .par_iter()
        .map(|&n| {
            let x = grid.point(n);
            if shape.level(x) > 0.0 {
                return Err(Error::Matrix(format!("node {x:?} outside Ω")));
            }
            // unit vector u: the chord runs from x_b = x − t·u to x
            let u = match path {
                PathChoice::FarSide | PathChoice::NearSide => {
                    let r = rsub(x, center);
                    let rn = rnorm(r);
                    let out = if rn > 1e-12 {
                        rscale(1.0 / rn, r)
                    } else {
                        [0.0, 0.0, 1.0]
                    };
                    if path == PathChoice::FarSide {
                        out
                    } else {
                        rscale(-1.0, out)
                    }
                }
                PathChoice::Direction(d) => {
                    let dn = rnorm(d);
                    if !(dn > 0.0) {
                        return Err(Error::Matrix("zero chord direction".into()));
                    }
                    rscale(1.0 / dn, d)
                }
            };
            let back = rscale(-1.0, u);
            let t = shape.ray_exit(x, back);
            let xb = radd(x, rscale(t, back));
            let lb = l0
                .eval(xb)
                .ok_or_else(|| Error::Matrix(format!("boundary mobility unusable at {xb:?}")))?;
            let steps = ((t / seg).ceil() as usize).max(1);
            let h = t / steps as f64;
            let f = |s: f64| {
                let p = radd(xb, rscale(s, u));
                comps[0].eval(p) * u[0] + comps[1].eval(p) * u[1] + comps[2].eval(p) * u[2]
            };
            let mut integral = 0.5 * (f(0.0) + f(t));
            for i in 1..steps {
                integral += f(i as f64 * h);
            }
            Ok(lb * (-(integral * h)).exp())
        })
        .collect();
    let mut out = vec![C64::new(0.0, 0.0); grid.node_count()];
    for (&n, v) in nodes.iter().zip(vals) {
        out[n] = C64::new(v?, 0.0);
    }
    ScalarField::from_values(grid, out)
}

/// `max|a − b| / max|a|` over `mask`.
pub fn path_independence(a: &ScalarField, b: &ScalarField, mask: &Mask) -> f64 {
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in mask.indices() {
        num = num.max((a.values()[i] - b.values()[i]).norm());
        den = den.max(a.values()[i].norm());
    }
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::transport::Convention;

    #[test]
    fn default_frames_are_independent() {
        let fs = build_measurement_frames(1.0, 0.1, 0.0, &default_frames()).unwrap();
        assert!((fs.condition - 1.0).abs() < 1e-12);
        for p in &fs.params {
            p.check_invariants().unwrap();
        }
        let dirs = fs.zeta0_dirs.map(re);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((dirs[0][2] - s).abs() < 1e-15);
        assert!((dirs[1][1].abs() - s).abs() < 1e-15);
        assert!((dirs[2][0].abs() - s).abs() < 1e-15);
    }

    #[test]
    fn equal_frames_rejected() {
        let f = [IDENTITY, IDENTITY, axis_rotation(1, 1.0)];
        assert!(build_measurement_frames(1.0, 0.1, 0.0, &f).is_err());
    }

    fn tf_from(grid: Grid, beta: impl Fn(usize) -> CVec + Sync, gamma: impl Fn(usize) -> C64 + Sync) -> TransportField {
        let b: Vec<CVec> = (0..grid.node_count()).map(&beta).collect();
        let g: Vec<C64> = (0..grid.node_count()).map(&gamma).collect();
        TransportField {
            beta: VectorField::from_nodes(grid, &b),
            gamma: ScalarField::from_values(grid, g).unwrap(),
            chi: ScalarField::zeros(grid),
            direction_ref: [C64::new(0.0, 0.0); 3],
            convention: Convention::DerivedIdentity,
        }
    }

    #[test]
    fn exact_linear_solve() {
        let grid = Grid::periodic(16).unwrap();
        let dirs = build_measurement_frames(1.0, 0.1, 0.0, &default_frames())
            .unwrap()
            .zeta0_dirs;
        let gv = [0.3, -0.2, 0.7];
        let l2 = |n: usize| 1.0 + 0.1 * grid.point(n)[0].cos();
        let tfs = [0, 1, 2].map(|j| {
            tf_from(
                grid,
                |n| dirs[j].map(|z| z * l2(n)),
                |n| {
                    let b = dirs[j].map(|z| z * l2(n));
                    b[0] * gv[0] + b[1] * gv[1] + b[2] * gv[2]
                },
            )
        });
        let g = assemble_gradient_system(&tfs, &Mask::full(grid), &GradientSystemConfig::default()).unwrap();
        for n in (0..grid.node_count()).step_by(97) {
            let v = re(g.gamma.at(n));
            assert!(rnorm(rsub(v, gv)) < 1e-12);
        }
        assert_eq!(g.failed, 0);
        assert!(g.imag_residual < 1e-12);
        let zero = [0, 1, 2].map(|j| tf_from(grid, |_| dirs[j], |_| C64::new(0.0, 0.0)));
        let g = assemble_gradient_system(&zero, &Mask::full(grid), &GradientSystemConfig::default()).unwrap();
        assert!(g
            .gamma
            .components()
            .iter()
            .all(|c| c.iter().all(|v| *v == C64::new(0.0, 0.0))));
    }

    #[test]
    fn singular_rows_fail() {
        let grid = Grid::periodic(16).unwrap();
        let e3 = [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let tfs = [0, 1, 2].map(|_| tf_from(grid, |_| e3, |_| C64::new(1.0, 0.0)));
        assert!(assemble_gradient_system(&tfs, &Mask::full(grid), &GradientSystemConfig::default()).is_err());
    }
}
