//! Two-measurement reconstruction of `L` by characteristics of the transport
//! equation `β·∇L + γL = 0`.
//!
//! `β` and `γ` are bilinear in the data `D_j = e^{iζ_j·x}P_j`. All derivatives
//! act on the envelopes `P_j`; the phase contributes the exact terms
//! `∇ → ∇ + iζ_j`, and the common factor `e^{i(ζ₁+ζ₂)·x}` of every product
//! is combined with `χ` analytically.

use crate::cgo::CgoParams;
use crate::domain::{BoundarySample, Domain, ShapeSpec};
use crate::error::{Error, Result};
use crate::forward::{MeasurementSet, Modulated};
use crate::grid::{Grid, Mask, ScalarField, VectorField, C64};
use crate::interp::{Interpolant, Kernel};
use crate::norm::{discrete_cm_norm, CmNorm};
use crate::stencil::{diff_axis, grad_div, jacobian, vector_laplacian};
use crate::vec3::{c_dot_r, cadd, cdot, cnorm, cross_frame, radd, rdot, rnorm, rscale, rsub, CVec, RVec};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// `χ(x) = −e^{−i(ζ₁+ζ₂)·x}h/(4√2)` for a pair `(ζ₁, ζ₂)` of one family.
pub fn chi_weight(p1: &CgoParams, p2: &CgoParams, grid: &Grid) -> Result<ScalarField> {
    if !p1.same_family(p2) || p1.index != 1 || p2.index != 2 {
        return Err(Error::Transport(
            "χ needs indices 1 and 2 of one (h, a, k, frame) family".into(),
        ));
    }
    let s = cadd(p1.zeta, p2.zeta);
    let c = -p1.h / (4.0 * std::f64::consts::SQRT_2);
    Ok(ScalarField::from_fn(*grid, |x| c * (-C64::i() * c_dot_r(s, x)).exp()))
}

/// Which algebraic form of `β, γ` to assemble.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// The brackets exactly as printed, with `χ` on the first bracket only.
    AsPrinted,
    /// Expansion of `E₁·(∇×∇×E₂) − E₂·(∇×∇×E₁) = 0` with `E_j = D_j/L`,
    /// scaled by `−iχ` so that `β → L²ζ₀`.
    #[default]
    DerivedIdentity,
}

impl Convention {
    pub fn name(self) -> &'static str {
        match self {
            Convention::AsPrinted => "as-printed",
            Convention::DerivedIdentity => "derived-identity",
        }
    }
}

/// Derivatives of one data field `D = e^{iζ·x}P`, all in envelope form.
pub struct DataPieces {
    zeta: CVec,
    p: VectorField,
    /// `jac[k].component(i) = ∂ᵢP_k`
    jac: [VectorField; 3],
    /// `e^{−iζ·x}∇·D`
    div: Vec<C64>,
    /// `e^{−iζ·x}ΔD`
    lap: [Vec<C64>; 3],
    /// `e^{−iζ·x}∇(∇·D)`
    grad_div: [Vec<C64>; 3],
}

impl DataPieces {
    pub fn new(d: &Modulated) -> Self {
        let p = d.envelope.clone();
        let z = d.zeta;
        let count = p.grid().node_count();
        let jac = jacobian(&p);
        let lap_p = vector_laplacian(&p);
        let gd_p = grad_div(&p);
        let iu = C64::i();
        let zz = cdot(z, z);
        let div: Vec<C64> = (0..count)
            .into_par_iter()
            .map(|n| {
                let dp = jac[0].component(0)[n] + jac[1].component(1)[n] + jac[2].component(2)[n];
                dp + iu * cdot(z, p.at(n))
            })
            .collect();
        let lap = [0, 1, 2].map(|k| {
            (0..count)
                .into_par_iter()
                .map(|n| {
                    let zg: C64 = (0..3).map(|i| z[i] * jac[k].component(i)[n]).sum();
                    lap_p.component(k)[n] + 2.0 * iu * zg - zz * p.component(k)[n]
                })
                .collect()
        });
        let grad_div = [0, 1, 2].map(|i| {
            (0..count)
                .into_par_iter()
                .map(|n| {
                    let jtz: C64 = (0..3).map(|k| z[k] * jac[k].component(i)[n]).sum();
                    gd_p.component(i)[n] + iu * jtz + iu * z[i] * div[n]
                })
                .collect()
        });
        DataPieces {
            zeta: z,
            p,
            jac,
            div,
            lap,
            grad_div,
        }
    }

    fn p_at(&self, n: usize) -> CVec {
        self.p.at(n)
    }

    /// `(∇D)v` at node `n`: `J_P v + iP(ζ·v)`.
    fn jv(&self, n: usize, v: CVec) -> CVec {
        let p = self.p.at(n);
        let zv = cdot(self.zeta, v);
        [0, 1, 2].map(|k| {
            let s: C64 = (0..3).map(|i| self.jac[k].component(i)[n] * v[i]).sum();
            s + C64::i() * p[k] * zv
        })
    }

    /// `(∇D)ᵀv` at node `n`: `J_Pᵀv + iζ(P·v)`.
    fn jtv(&self, n: usize, v: CVec) -> CVec {
        let pv = cdot(self.p.at(n), v);
        [0, 1, 2].map(|i| {
            let s: C64 = (0..3).map(|k| self.jac[k].component(i)[n] * v[k]).sum();
            s + C64::i() * self.zeta[i] * pv
        })
    }

    fn lap_at(&self, n: usize) -> CVec {
        [self.lap[0][n], self.lap[1][n], self.lap[2][n]]
    }

    fn grad_div_at(&self, n: usize) -> CVec {
        [self.grad_div[0][n], self.grad_div[1][n], self.grad_div[2][n]]
    }
}

#[derive(Clone, Debug)]
pub struct TransportField {
    pub beta: VectorField,
    pub gamma: ScalarField,
    pub chi: ScalarField,
    /// `ζ₀` of the pair; `β → L²ζ₀` as `h → 0`.
    pub direction_ref: CVec,
    pub convention: Convention,
}

fn sub(a: CVec, b: CVec) -> CVec {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn scale(s: C64, a: CVec) -> CVec {
    [s * a[0], s * a[1], s * a[2]]
}

/// Assembles `β, γ` from two data fields. `zeta0` is recorded as the
/// direction reference.
pub fn assemble_vector_field(
    d1: &Modulated,
    d2: &Modulated,
    chi: &ScalarField,
    convention: Convention,
    zeta0: CVec,
) -> Result<TransportField> {
    let grid = *d1.envelope.grid();
    if !grid.same_as(d2.envelope.grid()) || !grid.same_as(chi.grid()) {
        return Err(Error::Transport("data and χ grids differ".into()));
    }
    let a = DataPieces::new(d1);
    let b = DataPieces::new(d2);
    let s = cadd(d1.zeta, d2.zeta);
    let nodes: Vec<(CVec, C64)> = (0..grid.node_count())
        .into_par_iter()
        .map(|n| {
            let x = grid.point(n);
            let phase = (C64::i() * c_dot_r(s, x)).exp();
            let chi_n = chi.values()[n];
            let (p1, p2) = (a.p_at(n), b.p_at(n));
            let jac_term = sub(a.jv(n, p2), b.jv(n, p1));
            let div_term = sub(scale(a.div[n], p2), scale(b.div[n], p1));
            let lap_term = cdot(a.lap_at(n), p2) - cdot(b.lap_at(n), p1);
            let gd_term = cdot(a.grad_div_at(n), p2) - cdot(b.grad_div_at(n), p1);
            match convention {
                Convention::DerivedIdentity => {
                    let t = sub(a.jtv(n, p2), b.jtv(n, p1));
                    let bv = sub(cadd(jac_term, div_term), scale(C64::new(2.0, 0.0), t));
                    let c = -C64::i() * chi_n * phase;
                    (scale(c, bv), c * (lap_term - gd_term))
                }
                Convention::AsPrinted => {
                    let t = sub(a.jtv(n, p2), b.jv(n, p1));
                    let bv = sub(cadd(scale(chi_n, jac_term), div_term), scale(C64::new(2.0, 0.0), t));
                    (scale(phase, bv), phase * (chi_n * gd_term + lap_term))
                }
            }
        })
        .collect();
    let beta: Vec<CVec> = nodes.iter().map(|v| v.0).collect();
    let gamma: Vec<C64> = nodes.iter().map(|v| v.1).collect();
    Ok(TransportField {
        beta: VectorField::from_nodes(grid, &beta),
        gamma: ScalarField::from_values(grid, gamma)?,
        chi: chi.clone(),
        direction_ref: zeta0,
        convention,
    })
}

/// Builds `χ` and the transport field of measurements `i` (index 1) and `j` (index 2).
pub fn transport_field_for_pair(
    ms: &MeasurementSet,
    i: usize,
    j: usize,
    convention: Convention,
) -> Result<TransportField> {
    let (p1, p2) = (&ms.params[i], &ms.params[j]);
    let chi = chi_weight(p1, p2, &ms.grid)?;
    assemble_vector_field(&ms.d[i], &ms.d[j], &chi, convention, p1.zeta0())
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// `sup|β·∇L + γL| / (‖β‖‖∇L‖ + ‖γ‖‖L‖)` over `mask`.
pub fn transport_identity_residual(tf: &TransportField, l: &ScalarField, mask: &Mask) -> f64 {
    let grid = *l.grid();
    let gl: Vec<Vec<C64>> = (0..3).map(|a| diff_axis(l.values(), &grid, a, 1)).collect();
    let (mut num, mut nb, mut ng, mut nl, mut ngl) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in mask.indices() {
        let b = tf.beta.at(i);
        let g = [gl[0][i], gl[1][i], gl[2][i]];
        let r = cdot(b, g) + tf.gamma.values()[i] * l.values()[i];
        num = num.max(r.norm());
        nb = nb.max(cnorm(b));
        ngl = ngl.max(cnorm(g));
        ng = ng.max(tf.gamma.values()[i].norm());
        nl = nl.max(l.values()[i].norm());
    }
    ratio(num, nb * ngl + ng * nl)
}

/// Residuals of both conventions on one data pair, and the one with the smaller value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConventionComparison {
    pub as_printed: f64,
    pub derived_identity: f64,
    pub selected: Convention,
}

pub fn compare_conventions(
    d1: &Modulated,
    d2: &Modulated,
    chi: &ScalarField,
    zeta0: CVec,
    l: &ScalarField,
    mask: &Mask,
) -> Result<ConventionComparison> {
    let ap = transport_identity_residual(
        &assemble_vector_field(d1, d2, chi, Convention::AsPrinted, zeta0)?,
        l,
        mask,
    );
    let di = transport_identity_residual(
        &assemble_vector_field(d1, d2, chi, Convention::DerivedIdentity, zeta0)?,
        l,
        mask,
    );
    Ok(ConventionComparison {
        as_printed: ap,
        derived_identity: di,
        selected: if ap < di {
            Convention::AsPrinted
        } else {
            Convention::DerivedIdentity
        },
    })
}

/// `‖β − L²ζ₀‖` in the surrogate norms of order 0 and 1 over `mask`.
pub fn direction_diagnostic(tf: &TransportField, l: &ScalarField, zeta0: CVec, mask: &Mask) -> Result<[CmNorm; 2]> {
    let diff = tf.beta.map_nodes(|i, b| {
        let l2 = l.values()[i] * l.values()[i];
        sub(b, scale(l2, zeta0))
    });
    Ok([discrete_cm_norm(&diff, 0, mask)?, discrete_cm_norm(&diff, 1, mask)?])
}

/// A real vector field sampled at arbitrary points.
pub struct Velocity {
    comps: [Interpolant<f64>; 3],
    max_speed: f64,
}

impl Velocity {
    /// `V = Re β`; `max_speed` is taken over `region`.
    pub fn from_real_part(beta: &VectorField, region: &Mask, kernel: Kernel) -> Self {
        let g = *beta.grid();
        let comps = [0, 1, 2].map(|c| {
            let v: Vec<f64> = beta.component(c).iter().map(|z| z.re).collect();
            Interpolant::new(g, &v, kernel)
        });
        let max_speed = region
            .indices()
            .into_iter()
            .map(|i| rnorm(crate::vec3::re(beta.at(i))))
            .fold(0.0, f64::max);
        Velocity { comps, max_speed }
    }

    /// A constant field (used for oracles).
    pub fn constant(grid: &Grid, v: RVec) -> Self {
        let comps = [0, 1, 2].map(|c| Interpolant::new(*grid, &vec![v[c]; grid.node_count()], Kernel::Trilinear));
        Velocity {
            comps,
            max_speed: rnorm(v),
        }
    }

    pub fn at(&self, x: RVec) -> RVec {
        [0, 1, 2].map(|c| self.comps[c].eval(x))
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Step is `step_fraction·Δ/max|V|`.
    pub step_fraction: f64,
    pub max_steps: usize,
    /// Tolerance on the boundary level-set value at the exit point.
    pub boundary_tol: f64,
    pub kernel: Kernel,
    /// Fraction of seeds allowed to fail before the solve errors out.
    pub max_failure_fraction: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            step_fraction: 0.125,
            max_steps: 20_000,
            boundary_tol: 1e-10,
            kernel: Kernel::CubicBSpline,
            max_failure_fraction: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Characteristic {
    pub seed: RVec,
    pub path: Vec<RVec>,
    /// Flow time at each path point.
    pub times: Vec<f64>,
    pub exit_time: f64,
    pub exit_point: RVec,
    pub direction_sign: i8,
}

/// Integrates `θ̇ = sign·V(θ)` with classical RK4 from `seed` until it leaves `shape`.
pub fn trace_characteristic(
    seed: RVec,
    v: &Velocity,
    shape: &ShapeSpec,
    step: f64,
    sign: i8,
    cfg: &TraceConfig,
) -> Result<Characteristic> {
    if shape.level(seed) > 0.0 {
        return Err(Error::Transport(format!("seed {seed:?} outside Ω")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Transport(format!("step {step} must be positive")));
    }
    let s = sign as f64;
    let f = |x: RVec| rscale(s, v.at(x));
    let mut path = vec![seed];
    let mut times = vec![0.0];
    let mut x = seed;
    let mut t = 0.0;
    if shape.level(seed) == 0.0 {
        return Ok(Characteristic {
            seed,
            path,
            times,
            exit_time: 0.0,
            exit_point: seed,
            direction_sign: sign,
        });
    }
    for _ in 0..cfg.max_steps {
        let k1 = f(x);
        let k2 = f(radd(x, rscale(0.5 * step, k1)));
        let k3 = f(radd(x, rscale(0.5 * step, k2)));
        let k4 = f(radd(x, rscale(step, k3)));
        let inc = [0, 1, 2].map(|i| step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        let next = radd(x, inc);
        if shape.level(next) >= 0.0 {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            let mut frac = 1.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let lv = shape.level(radd(x, rscale(mid, inc)));
                frac = mid;
                if lv.abs() <= cfg.boundary_tol {
                    break;
                }
                if lv >= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let exit = radd(x, rscale(frac, inc));
            t += frac * step;
            path.push(exit);
            times.push(t);
            return Ok(Characteristic {
                seed,
                path,
                times,
                exit_time: t,
                exit_point: exit,
                direction_sign: sign,
            });
        }
        x = next;
        t += step;
        path.push(x);
        times.push(t);
    }
    Err(Error::Transport(format!(
        "characteristic from {seed:?} did not exit within {} steps",
        cfg.max_steps
    )))
}

/// Trapezoid rule for `∫ f(θ(t)) dt` along a traced path.
pub fn integrate_along(c: &Characteristic, f: impl Fn(RVec) -> f64) -> f64 {
    let vals: Vec<f64> = c.path.iter().map(|&p| f(p)).collect();
    (1..vals.len())
        .map(|i| 0.5 * (vals[i] + vals[i - 1]) * (c.times[i] - c.times[i - 1]))
        .sum()
}

/// Boundary values of `L` and their interpolation to arbitrary boundary points.
#[derive(Clone, Debug)]
pub struct BoundaryMobility {
    samples: Vec<BoundarySample>,
    values: Vec<Option<f64>>,
    shape: ShapeSpec,
    radius: f64,
}

/// Weighted least squares over measurements:
/// `L₀ = Re[Σ_j tD_j·conj(G_j)] / Σ_j |G_j|²`. Samples where
/// `(Σ_j|G_j|²)^{1/2}` is below `floor_rel` times its maximum are unusable.
pub fn boundary_mobility(ms: &MeasurementSet, domain: &Domain, floor_rel: f64) -> Result<BoundaryMobility> {
    boundary_mobility_from(
        &ms.samples,
        &ms.g.iter().collect::<Vec<_>>(),
        &ms.d_boundary.iter().collect::<Vec<_>>(),
        domain,
        floor_rel,
    )
}

pub fn boundary_mobility_from(
    samples: &[BoundarySample],
    g: &[&Vec<CVec>],
    td: &[&Vec<CVec>],
    domain: &Domain,
    floor_rel: f64,
) -> Result<BoundaryMobility> {
    if g.is_empty() || g.len() != td.len() {
        return Err(Error::Transport(
            "boundary mobility needs matching G and tD lists".into(),
        ));
    }
    let m = samples.len();
    if g.iter().chain(td.iter()).any(|v| v.len() != m) {
        return Err(Error::Transport("trace lengths differ from the sample count".into()));
    }
    let mags: Vec<f64> = (0..m)
        .map(|i| {
            g.iter()
                .map(|gj| gj[i].iter().map(|c| c.norm_sqr()).sum::<f64>())
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let top = mags.iter().cloned().fold(0.0, f64::max);
    let values = (0..m)
        .map(|i| {
            if !(mags[i] > floor_rel * top) || mags[i] == 0.0 {
                return None;
            }
            let num: f64 = (0..g.len()).map(|j| crate::vec3::cdot_conj(td[j][i], g[j][i]).re).sum();
            Some(num / (mags[i] * mags[i]))
        })
        .collect();
    Ok(BoundaryMobility {
        samples: samples.to_vec(),
        values,
        shape: domain.shape().clone(),
        radius: 3.0 * domain.boundary_spacing(),
    })
}

const MLS_TERMS: usize = 6;

impl BoundaryMobility {
    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn samples(&self) -> &[BoundarySample] {
        &self.samples
    }

    pub fn unusable_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Moving least squares at a boundary point: local quadratic in tangent
    /// coordinates with Wendland weights, falling back to a plane and then to
    /// a weighted mean when too few samples are near.
    pub fn eval(&self, x: RVec) -> Option<f64> {
        let nu = self.shape.normal(x);
        let (t1, t2) = cross_frame(nu);
        let mut r = self.radius;
        for _ in 0..4 {
            let near: Vec<(f64, f64, f64, f64)> = self
                .samples
                .iter()
                .zip(&self.values)
                .filter_map(|(s, v)| {
                    let d = rsub(s.point, x);
                    let dist = rnorm(d);
                    if dist >= r {
                        return None;
                    }
                    v.map(|val| {
                        let q = dist / r;
                        let w = (1.0 - q).powi(4) * (4.0 * q + 1.0);
                        (rdot(d, t1) / r, rdot(d, t2) / r, w, val)
                    })
                })
                .collect();
            if near.len() >= MLS_TERMS + 2 {
                if let Some(v) = weighted_fit(&near, MLS_TERMS) {
                    return Some(v);
                }
            }
            if near.len() >= 4 {
                if let Some(v) = weighted_fit(&near, 3) {
                    return Some(v);
                }
            }
            if !near.is_empty() && r >= 2.0 * self.radius {
                let ws: f64 = near.iter().map(|p| p.2).sum();
                if ws > 0.0 {
                    return Some(near.iter().map(|p| p.2 * p.3).sum::<f64>() / ws);
                }
            }
            r *= 1.5;
        }
        None
    }
}

fn weighted_fit(pts: &[(f64, f64, f64, f64)], terms: usize) -> Option<f64> {
    let basis = |u: f64, v: f64| [1.0, u, v, u * u, u * v, v * v];
    let mut a = DMatrix::<f64>::zeros(terms, terms);
    let mut b = DVector::<f64>::zeros(terms);
    for &(u, v, w, val) in pts {
        let p = basis(u, v);
        for i in 0..terms {
            b[i] += w * p[i] * val;
            for j in 0..terms {
                a[(i, j)] += w * p[i] * p[j];
            }
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin < 1e-10 * smax {
        return None;
    }
    let sol = svd.solve(&b, 1e-14 * smax).ok()?;
    sol[0].is_finite().then_some(sol[0])
}

#[derive(Clone, Debug)]
pub struct TransportSolution {
    /// Reconstructed `L` on the mask, zero elsewhere.
    pub l_rec: ScalarField,
    /// Exit time of the characteristic used at each node (zero off the mask).
    pub exit_time: ScalarField,
    pub failures: usize,
    pub seeds: usize,
    /// Relative residual of `Im β·∇L_rec + Im γ L_rec` on the interior of the mask.
    pub imag_residual: f64,
    pub step: f64,
}

/// Reconstructs `L` on `mask` from the real transport equation
/// `Re β·∇L + Re γ L = 0`. Along a forward characteristic `L = L₀(x₊)e^{∫Re γ}`,
/// along a backward one `L = L₀(x₋)e^{−∫Re γ}`; the shorter one is used.
pub fn solve_transport(
    tf: &TransportField,
    l0: &BoundaryMobility,
    domain: &Domain,
    mask: &Mask,
    cfg: &TraceConfig,
) -> Result<TransportSolution> {
    let grid = *domain.grid();
    let v = Velocity::from_real_part(&tf.beta, domain.inside(), cfg.kernel);
    if !(v.max_speed() > 0.0) {
        return Err(Error::Transport("Re β vanishes on Ω".into()));
    }
    let gamma: Vec<f64> = tf.gamma.values().iter().map(|z| z.re).collect();
    let gi = Interpolant::new(grid, &gamma, cfg.kernel);
    let step = cfg.step_fraction * grid.spacing() / v.max_speed();
    let nodes = mask.indices();
    let shape = domain.shape();
    let results: Vec<Option<(f64, f64)>> = nodes
        .par_iter()
        .map(|&n| {
            let x = grid.point(n);
            let mut best: Option<(f64, f64)> = None;
            for sign in [1i8, -1] {
                let Ok(c) = trace_characteristic(x, &v, shape, step, sign, cfg) else {
                    continue;
                };
                if best.is_some_and(|(t, _)| t <= c.exit_time) {
                    continue;
                }
                let Some(lb) = l0.eval(c.exit_point) else {
                    continue;
                };
                let integral = integrate_along(&c, |p| gi.eval(p));
                best = Some((c.exit_time, lb * (sign as f64 * integral).exp()));
            }
            best
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    if failures as f64 > cfg.max_failure_fraction * nodes.len() as f64 {
        return Err(Error::TraceFailures {
            failed: failures,
            total: nodes.len(),
        });
    }
    let mut l = vec![C64::new(0.0, 0.0); grid.node_count()];
    let mut t = vec![C64::new(0.0, 0.0); grid.node_count()];
    let mut solved = vec![false; grid.node_count()];
    for (&n, r) in nodes.iter().zip(&results) {
        if let Some((time, val)) = r {
            l[n] = C64::new(*val, 0.0);
            t[n] = C64::new(*time, 0.0);
            solved[n] = true;
        }
    }
    let l_rec = ScalarField::from_values(grid, l)?;
    let solved = Mask::from_bits(grid, solved)?;
    let imag_residual = imaginary_residual(tf, &l_rec, &solved.erode(2));
    Ok(TransportSolution {
        l_rec,
        exit_time: ScalarField::from_values(grid, t)?,
        failures,
        seeds: nodes.len(),
        imag_residual,
        step,
    })
}

/// `sup|Im β·∇L + Im γ L| / (‖Im β‖‖∇L‖ + ‖Im γ‖‖L‖)` over `mask`.
pub fn imaginary_residual(tf: &TransportField, l: &ScalarField, mask: &Mask) -> f64 {
    let grid = *l.grid();
    let gl: Vec<Vec<C64>> = (0..3).map(|a| diff_axis(l.values(), &grid, a, 1)).collect();
    let (mut num, mut nb, mut ng, mut nl, mut ngl) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in mask.indices() {
        let b = crate::vec3::im(tf.beta.at(i));
        let g = [gl[0][i].re, gl[1][i].re, gl[2][i].re];
        let gam = tf.gamma.values()[i].im;
        let lv = l.values()[i].re;
        num = num.max((rdot(b, g) + gam * lv).abs());
        nb = nb.max(rnorm(b));
        ngl = ngl.max(rnorm(g));
        ng = ng.max(gam.abs());
        nl = nl.max(lv.abs());
    }
    ratio(num, nb * ngl + ng * nl)
}

/// Forward exit point and time of each seed under `V = Re β`.
pub fn exit_maps(
    tf: &TransportField,
    domain: &Domain,
    seeds: &[RVec],
    step: f64,
    cfg: &TraceConfig,
) -> Result<Vec<(RVec, f64)>> {
    let v = Velocity::from_real_part(&tf.beta, domain.inside(), cfg.kernel);
    seeds
        .par_iter()
        .map(|&x| trace_characteristic(x, &v, domain.shape(), step, 1, cfg).map(|c| (c.exit_point, c.exit_time)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cgo::make_zeta_eta;
    use crate::domain::build_domain;
    use crate::vec3::{axis_rotation, IDENTITY};

    #[test]
    fn chi_examples() {
        let g = Grid::periodic(16).unwrap();
        let p1 = make_zeta_eta(0.1, 0.0, 1.0, &IDENTITY, 1).unwrap();
        let p2 = make_zeta_eta(0.1, 0.0, 1.0, &IDENTITY, 2).unwrap();
        let chi = chi_weight(&p1, &p2, &g).unwrap();
        for v in chi.values() {
            assert!((v.re + 0.017_677_669_529_663_69).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
        let q1 = make_zeta_eta(0.1, 1.0, 1.0, &IDENTITY, 1).unwrap();
        let q2 = make_zeta_eta(0.1, 1.0, 1.0, &IDENTITY, 2).unwrap();
        let chi = chi_weight(&q1, &q2, &g).unwrap();
        let mags: Vec<f64> = chi.values().iter().map(|v| v.norm()).collect();
        let (lo, hi) = mags
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(a, b), &m| (a.min(m), b.max(m)));
        assert!((hi / lo - 1.0).abs() < 1e-12);
        let x = g.point(5);
        let want = -0.1 / (4.0 * 2f64.sqrt()) * C64::new(0.0, -x[0]).exp();
        assert!((chi.values()[5] - want).norm() < 1e-15);
        assert!(chi_weight(&p1, &q2, &g).is_err());
        assert!(chi_weight(&p2, &p1, &g).is_err());
        let r = make_zeta_eta(0.1, 0.0, 1.0, &axis_rotation(0, 0.5), 2).unwrap();
        assert!(chi_weight(&p1, &r, &g).is_err());
    }

    #[test]
    fn straight_characteristics_in_ball() {
        let g = Grid::periodic(32).unwrap();
        let v = Velocity::constant(&g, [0.0, 0.0, 1.0]);
        let shape = ShapeSpec::default();
        let cfg = TraceConfig::default();
        let c = trace_characteristic([0.0; 3], &v, &shape, 0.01, 1, &cfg).unwrap();
        assert!((c.exit_time - 0.8).abs() < 1e-9);
        assert!((c.exit_point[2] - 0.8).abs() < 1e-9);
        let c = trace_characteristic([0.0, 0.0, 0.4], &v, &shape, 0.01, 1, &cfg).unwrap();
        assert!((c.exit_time - 0.4).abs() < 1e-9);
        let c = trace_characteristic([0.0, 0.0, 0.4], &v, &shape, 0.01, -1, &cfg).unwrap();
        assert!((c.exit_time - 1.2).abs() < 1e-9);
        assert!(trace_characteristic([0.0, 0.0, 0.9], &v, &shape, 0.01, 1, &cfg).is_err());
        let still = Velocity::constant(&g, [0.0; 3]);
        let short = TraceConfig { max_steps: 10, ..cfg };
        assert!(trace_characteristic([0.0; 3], &still, &shape, 0.01, 1, &short).is_err());
    }

    #[test]
    fn boundary_mobility_of_scaled_traces() {
        let g = Grid::periodic(32).unwrap();
        let d = build_domain(&ShapeSpec::default(), &g, [0.0, 0.0, 1.0], 0.16).unwrap();
        let s = d.boundary_samples().to_vec();
        let gt: Vec<CVec> = s
            .iter()
            .map(|b| crate::vec3::rc_cross(b.normal, [C64::new(1.0, 0.5), C64::new(0.0, 1.0), C64::new(0.3, 0.0)]))
            .collect();
        let td: Vec<CVec> = gt.iter().map(|v| scale(C64::new(3.0, 0.0), *v)).collect();
        let bm = boundary_mobility_from(&s, &[&gt], &[&td], &d, 1e-14).unwrap();
        for v in bm.values().iter().flatten() {
            assert!((v - 3.0).abs() < 1e-12);
        }
        assert!((bm.eval(d.shape().boundary_along([0.6, 0.0, 0.8])).unwrap() - 3.0).abs() < 1e-9);
        let mut zero = gt.clone();
        zero[0] = [C64::new(0.0, 0.0); 3];
        let bm = boundary_mobility_from(&s, &[&zero], &[&td], &d, 1e-14).unwrap();
        assert!(bm.values()[0].is_none());
        assert_eq!(bm.unusable_count(), 1);
    }

    #[test]
    fn mls_reproduces_quadratics() {
        let g = Grid::periodic(64).unwrap();
        let d = build_domain(&ShapeSpec::default(), &g, [0.0, 0.0, 1.0], 0.16).unwrap();
        let f = |x: RVec| 1.0 + 0.3 * x[0] - 0.2 * x[1] * x[2] + 0.1 * x[2];
        let s = d.boundary_samples();
        let bm = BoundaryMobility {
            samples: s.to_vec(),
            values: s.iter().map(|b| Some(f(b.point))).collect(),
            shape: d.shape().clone(),
            radius: 3.0 * d.boundary_spacing(),
        };
        for u in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.48, -0.6, 0.64]] {
            let x = d.shape().boundary_along(u);
            assert!((bm.eval(x).unwrap() - f(x)).abs() < 1e-3, "{u:?}");
        }
    }
}
