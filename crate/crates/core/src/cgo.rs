//! Complex geometrical optics solutions `E = e^{iζ·x}(η + R_ζ)` of
//! `∇×∇×E − k²nE = 0`.
//!
//! `G_ζ` is the Fourier multiplier `1/(|ξ|² + 2ζ·ξ)`, which equals
//! `−(Δ + 2iζ·∇)⁻¹`. With that sign the scalar problem
//! `(Δ + 2iζ·∇ + α·∇̃)u = v` becomes `f + G_ζ(qf) = −G_ζ(g)` for
//! `f = n^{1/2}u`, `g = n^{1/2}v`, `q = Δn^{1/2}/n^{1/2}`.
//!
//! On the plain periodic lattice `ξ = 0` is always a zero of the symbol. When
//! `Im ζ` points along a coordinate axis the operator instead acts on the
//! lattice shifted by half a frequency along that axis, where
//! `|symbol| ≥ |Im ζ|`. Inputs of `G_ζ` are compactly supported inside the
//! box, so the quasi-periodic image is the free-space one up to periodisation.

use crate::error::{Error, Result};
use crate::fourier::{clamp_symbol, SpectralBasis};
use crate::grid::{Grid, Mask, ScalarField, VectorField, C64};
use crate::stencil::{diff_axis, grad_div, jacobian, vector_laplacian};
use crate::vec3::{
    c_dot_r, cadd, ccross, cdot, cnorm, cscale, csub, is_rotation, mat_cvec, real_to_c, rnorm, CVec, Mat3, IDENTITY,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Sign of the implemented Green operator relative to `Δ + 2iζ·∇`.
pub const GREEN_SIGN: &str = "G = -(Δ + 2iζ·∇)^{-1} (symbol 1/(|ξ|² + 2ζ·ξ))";

/// Largest exponent `|Im ζ|·extent` accepted before `e^{iζ·x}` would overflow.
pub const OVERFLOW_EXPONENT: f64 = 700.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoParams {
    pub zeta: CVec,
    pub eta: CVec,
    pub h: f64,
    pub a: f64,
    pub k: f64,
    pub frame: Mat3,
    pub index: u8,
}

/// `ζ₀ = (0, i, 1)/√2` in canonical coordinates.
pub fn canonical_zeta0() -> CVec {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [C64::new(0.0, 0.0), C64::new(0.0, s), C64::new(s, 0.0)]
}

/// `η₀ = (1, 0, 0)` in canonical coordinates.
pub fn canonical_eta0() -> CVec {
    real_to_c([1.0, 0.0, 0.0])
}

/// Builds `ζ_index, η_index` of the two-parameter family, rotated by `frame`:
///
/// `ζ₁ = (a/2, i s, 1/h)`, `ζ₂ = (a/2, −i s, −1/h)` with `s = √(1/h² + a²/4 − k²)`,
/// `η₁ = (1/h, 0, −a/2)/√(1/h² + a²)`, `η₂ = (1/h, 0, a/2)/√(1/h² + a²)`.
pub fn make_zeta_eta(h: f64, a: f64, k: f64, frame: &Mat3, index: u8) -> Result<CgoParams> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::CgoParams(format!("h = {h} must be positive")));
    }
    if !(k.is_finite() && k > 0.0) {
        return Err(Error::CgoParams(format!("k = {k} must be positive")));
    }
    if !a.is_finite() {
        return Err(Error::CgoParams("a must be finite".into()));
    }
    if index != 1 && index != 2 {
        return Err(Error::CgoParams(format!("index {index} not in {{1, 2}}")));
    }
    if !is_rotation(frame, 1e-10) {
        return Err(Error::CgoParams("frame is not a rotation".into()));
    }
    let inv_h = 1.0 / h;
    let radicand = inv_h * inv_h + 0.25 * a * a - k * k;
    if !(radicand > 0.0) {
        return Err(Error::Radicand(radicand));
    }
    let s = radicand.sqrt();
    let c = 1.0 / (inv_h * inv_h + a * a).sqrt();
    let (zeta, eta) = if index == 1 {
        (
            [C64::new(0.5 * a, 0.0), C64::new(0.0, s), C64::new(inv_h, 0.0)],
            real_to_c([c * inv_h, 0.0, -0.5 * a * c]),
        )
    } else {
        (
            [C64::new(0.5 * a, 0.0), C64::new(0.0, -s), C64::new(-inv_h, 0.0)],
            real_to_c([c * inv_h, 0.0, 0.5 * a * c]),
        )
    };
    let p = CgoParams {
        zeta: mat_cvec(frame, zeta),
        eta: mat_cvec(frame, eta),
        h,
        a,
        k,
        frame: *frame,
        index,
    };
    p.check_invariants()?;
    Ok(p)
}

impl CgoParams {
    pub fn zeta_norm(&self) -> f64 {
        cnorm(self.zeta)
    }

    pub fn im_zeta(&self) -> [f64; 3] {
        self.zeta.map(|z| z.im)
    }

    /// `ζ₀` of the family (frame image of `(0, i, 1)/√2`).
    pub fn zeta0(&self) -> CVec {
        mat_cvec(&self.frame, canonical_zeta0())
    }

    /// `η₀` of the family (frame image of `e₁`).
    pub fn eta0(&self) -> CVec {
        mat_cvec(&self.frame, canonical_eta0())
    }

    /// Limit of `ζ/|ζ|`: `ζ₀` for index 1 and `−ζ₀` for index 2.
    pub fn limit_direction(&self) -> CVec {
        let z0 = self.zeta0();
        if self.index == 1 {
            z0
        } else {
            cscale(C64::new(-1.0, 0.0), z0)
        }
    }

    /// Same `(h, a, k, frame)` family.
    pub fn same_family(&self, other: &CgoParams) -> bool {
        self.h == other.h && self.a == other.a && self.k == other.k && self.frame == other.frame
    }

    pub fn check_invariants(&self) -> Result<()> {
        let zn = self.zeta_norm();
        let en = cnorm(self.eta);
        let dispersion = (cdot(self.zeta, self.zeta) - self.k * self.k).norm();
        if dispersion > 1e-12 * zn * zn {
            return Err(Error::CgoParams(format!("ζ·ζ − k² = {dispersion:e}")));
        }
        let orth = cdot(self.zeta, self.eta).norm();
        if orth > 1e-12 * zn * en {
            return Err(Error::CgoParams(format!("ζ·η = {orth:e}")));
        }
        if !(en > 0.0 && en <= 1.0 + 1e-12) {
            return Err(Error::CgoParams(format!("|η| = {en}")));
        }
        Ok(())
    }

    /// `|Im ζ|·extent`, the log of the largest growth of `e^{iζ·x}` over a set of that diameter.
    pub fn growth_exponent(&self, extent: f64) -> f64 {
        rnorm(self.im_zeta()) * extent
    }
}

/// Checks `|Im ζ|·diam(Ω) ≤ limit`; returns the exponent.
pub fn check_admissible(params: &CgoParams, diameter: f64, limit: f64) -> Result<f64> {
    let e = params.growth_exponent(diameter);
    if e > limit {
        return Err(Error::Inadmissible { exponent: e, limit });
    }
    Ok(e)
}

/// `e^{iζ·x}` at every node.
pub fn phase_field(grid: &Grid, zeta: CVec) -> Vec<C64> {
    let axes: [Vec<C64>; 3] = [0, 1, 2].map(|a| {
        (0..grid.n())
            .map(|i| (C64::i() * zeta[a] * grid.coord(i)).exp())
            .collect()
    });
    (0..grid.node_count())
        .into_par_iter()
        .map(|f| {
            let [i, j, k] = grid.ijk(f);
            axes[0][i] * axes[1][j] * axes[2][k]
        })
        .collect()
}

/// `e^{iζ·x}F`.
pub fn modulate(envelope: &VectorField, zeta: CVec) -> VectorField {
    let ph = phase_field(envelope.grid(), zeta);
    envelope.map_nodes(|i, v| cscale(ph[i], v))
}

/// `e^{−iζ·x}D`.
pub fn demodulate(field: &VectorField, zeta: CVec) -> VectorField {
    let ph = phase_field(field.grid(), zeta.map(|z| -z));
    field.map_nodes(|i, v| cscale(ph[i], v))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeShift {
    /// Plain periodic lattice with symbol clamping.
    None,
    /// Half-frequency shift along the axis of `Im ζ` when it is axis aligned.
    #[default]
    Auto,
}

/// Chooses the lattice shift for `ζ` (in units of `2π/L`).
pub fn lattice_shift_for(zeta: CVec, mode: LatticeShift) -> [f64; 3] {
    if mode == LatticeShift::None {
        return [0.0; 3];
    }
    let im = zeta.map(|z| z.im.abs());
    let total = rnorm(im);
    if total == 0.0 {
        return [0.0; 3];
    }
    let axis = (0..3).fold(0, |b, i| if im[i] > im[b] { i } else { b });
    let off: f64 = (0..3).filter(|&i| i != axis).map(|i| im[i]).sum();
    if off > 1e-12 * total {
        return [0.0; 3];
    }
    let mut s = [0.0; 3];
    s[axis] = 0.5;
    s
}

/// `G_ζ` on a fixed grid with its symbol table precomputed.
#[derive(Debug)]
pub struct FaddeevOperator {
    basis: SpectralBasis,
    zeta: CVec,
    inv_symbol: Vec<C64>,
    regularized: usize,
}

impl FaddeevOperator {
    /// `floor_rel` scales the clamping floor `τ = floor_rel·|ζ|²`.
    pub fn new(grid: Grid, zeta: CVec, lattice: LatticeShift, floor_rel: f64) -> Self {
        let shift = lattice_shift_for(zeta, lattice);
        let basis = SpectralBasis::new(grid, shift);
        let floor = floor_rel * cnorm(zeta).powi(2);
        let table: Vec<(C64, bool)> = (0..grid.node_count())
            .into_par_iter()
            .map(|f| {
                let (s, r) = clamp_symbol(symbol(zeta, basis.wave_vector(f)), floor);
                (s.inv(), r)
            })
            .collect();
        let regularized = table.iter().filter(|(_, r)| *r).count();
        FaddeevOperator {
            basis,
            zeta,
            inv_symbol: table.into_iter().map(|(s, _)| s).collect(),
            regularized,
        }
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn zeta(&self) -> CVec {
        self.zeta
    }

    pub fn regularized_count(&self) -> usize {
        self.regularized
    }

    pub fn regularized_fraction(&self) -> f64 {
        self.regularized as f64 / self.inv_symbol.len() as f64
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        let spec = self.basis.to_spectrum(v);
        self.basis.apply_table(&spec, |f| self.inv_symbol[f])
    }
}

/// `max_p ‖G_ζ v_p‖₂/‖v_p‖₂` over `probes` band-limited random fields `v_p`.
pub fn faddeev_norm_estimate(params: &CgoParams, grid: &Grid, probes: usize, seed: u64, cfg: &SolverConfig) -> f64 {
    let op = FaddeevOperator::new(*grid, params.zeta, cfg.lattice, cfg.symbol_floor);
    let l2 = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    (0..probes as u64)
        .map(|p| {
            let v = crate::forward::smooth_random_field(grid, seed, p).into_components()[0].clone();
            l2(&op.apply(&v)) / l2(&v)
        })
        .fold(0.0, f64::max)
}

/// `|ξ|² + 2ζ·ξ`.
pub fn symbol(zeta: CVec, xi: [f64; 3]) -> C64 {
    C64::new(xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2], 0.0) + c_dot_r(zeta, xi) * 2.0
}

#[derive(Clone, Debug)]
pub struct FaddeevOutput {
    pub field: ScalarField,
    pub regularized_frequency_count: usize,
    pub lattice_shift: [f64; 3],
    pub warning: Option<String>,
}

/// Applies `G_ζ` of `params` to `v`.
pub fn faddeev_apply(params: &CgoParams, v: &ScalarField, lattice: LatticeShift) -> FaddeevOutput {
    let op = FaddeevOperator::new(*v.grid(), params.zeta, lattice, SolverConfig::default().symbol_floor);
    let warning = (op.regularized_fraction() > 1e-3).then(|| {
        format!(
            "{} of {} frequencies regularized",
            op.regularized_count(),
            v.grid().node_count()
        )
    });
    FaddeevOutput {
        field: ScalarField::from_values(*v.grid(), op.apply(v.values())).expect("same grid"),
        regularized_frequency_count: op.regularized_count(),
        lattice_shift: op.basis().shift(),
        warning,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Relative update at which the outer fixed point stops.
    pub tol: f64,
    pub max_iter: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    pub lattice: LatticeShift,
    /// Clamping floor relative to `|ζ|²`.
    pub symbol_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 60,
            inner_tol: 1e-12,
            inner_max_iter: 200,
            lattice: LatticeShift::Auto,
            symbol_floor: 1e-8,
        }
    }
}

/// Coefficient-derived fields used by the solvers, all by spectral differentiation.
#[derive(Clone, Debug)]
pub struct Medium {
    grid: Grid,
    n: Vec<C64>,
    sqrt_n: Vec<C64>,
    q: Vec<C64>,
    alpha: [Vec<C64>; 3],
    /// `grad_alpha[k][i] = ∂ᵢα_k`
    grad_alpha: [[Vec<C64>; 3]; 3],
    trivial: bool,
}

impl Medium {
    pub fn new(n: &ScalarField) -> Result<Self> {
        let grid = *n.grid();
        if let Some(v) = n.values().iter().find(|v| !(v.re > 0.0) || !v.im.is_finite()) {
            return Err(Error::CgoParams(format!("Re(n) must be positive, found {v}")));
        }
        let basis = SpectralBasis::new(grid, [0.0; 3]);
        let nv = n.values().to_vec();
        let sqrt_n: Vec<C64> = nv.iter().map(|v| v.sqrt()).collect();
        let trivial = nv.iter().all(|&v| v == nv[0]);
        let zeros = || vec![C64::new(0.0, 0.0); grid.node_count()];
        if trivial {
            return Ok(Medium {
                grid,
                n: nv,
                sqrt_n,
                q: zeros(),
                alpha: [zeros(), zeros(), zeros()],
                grad_alpha: [0, 1, 2].map(|_| [zeros(), zeros(), zeros()]),
                trivial,
            });
        }
        let sn_spec = basis.to_spectrum(&sqrt_n);
        let lap = basis.laplacian(&sn_spec);
        let q = lap.iter().zip(&sqrt_n).map(|(l, s)| l / s).collect();
        let n_spec = basis.to_spectrum(&nv);
        let alpha = [0, 1, 2].map(|i| {
            let d = basis.derivative(&n_spec, i);
            d.iter().zip(&nv).map(|(a, b)| a / b).collect::<Vec<_>>()
        });
        let grad_alpha = [0, 1, 2].map(|k| {
            let s = basis.to_spectrum(&alpha[k]);
            [0, 1, 2].map(|i| basis.derivative(&s, i))
        });
        Ok(Medium {
            grid,
            n: nv,
            sqrt_n,
            q,
            alpha,
            grad_alpha,
            trivial,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> &[C64] {
        &self.n
    }

    pub fn n_field(&self) -> ScalarField {
        ScalarField::from_values(self.grid, self.n.clone()).expect("same grid")
    }

    pub fn sqrt_n(&self) -> &[C64] {
        &self.sqrt_n
    }

    pub fn alpha(&self) -> &[Vec<C64>; 3] {
        &self.alpha
    }

    /// True when `n` is constant (then `α = 0`, `q = 0`).
    pub fn is_homogeneous(&self) -> bool {
        self.trivial
    }
}

fn max_abs(v: &[C64]) -> f64 {
    v.par_iter().map(|z| z.norm()).reduce(|| 0.0, f64::max)
}

fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.par_iter()
        .zip(b.par_iter())
        .map(|(x, y)| (x - y).norm())
        .reduce(|| 0.0, f64::max)
}

fn relative_update(new: &[C64], old: &[C64]) -> f64 {
    let d = max_abs_diff(new, old);
    if d == 0.0 {
        return 0.0;
    }
    d / max_abs(new).max(f64::MIN_POSITIVE)
}

/// Solves `(Δ + 2iζ·∇ + α·∇̃)u = v` by the Neumann series of `f + G_ζ(qf) = −G_ζ(g)`.
/// Returns `u` and the number of series iterations.
pub fn solve_scalarized_with(
    op: &FaddeevOperator,
    medium: &Medium,
    v: &[C64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<C64>, usize)> {
    let g: Vec<C64> = v.par_iter().zip(medium.sqrt_n.par_iter()).map(|(a, b)| a * b).collect();
    let b: Vec<C64> = op.apply(&g).into_par_iter().map(|z| -z).collect();
    let mut f = b.clone();
    let mut iterations = 0;
    if !medium.trivial {
        let mut prev = f64::INFINITY;
        let mut converged = false;
        for it in 1..=max_iter {
            let qf: Vec<C64> = f.par_iter().zip(medium.q.par_iter()).map(|(a, b)| a * b).collect();
            let gq = op.apply(&qf);
            let next: Vec<C64> = b.par_iter().zip(gq.par_iter()).map(|(x, y)| x - y).collect();
            let upd = relative_update(&next, &f);
            f = next;
            iterations = it;
            if upd < tol {
                converged = true;
                break;
            }
            if it >= 2 && upd > 1e-13 && upd >= prev {
                return Err(Error::NonContraction { ratio: upd / prev });
            }
            prev = upd;
        }
        if !converged {
            return Err(Error::MaxIterations {
                iterations: max_iter,
                update: prev,
            });
        }
    }
    let u = f.par_iter().zip(medium.sqrt_n.par_iter()).map(|(a, b)| a / b).collect();
    Ok((u, iterations))
}

/// [`solve_scalarized_with`] building the operator and medium from `params` and `n`.
pub fn solve_scalarized(
    params: &CgoParams,
    n: &ScalarField,
    v: &ScalarField,
    cfg: &SolverConfig,
) -> Result<ScalarField> {
    let op = FaddeevOperator::new(*n.grid(), params.zeta, cfg.lattice, cfg.symbol_floor);
    let medium = Medium::new(n)?;
    let (u, _) = solve_scalarized_with(&op, &medium, v.values(), cfg.inner_tol, cfg.inner_max_iter)?;
    ScalarField::from_values(*n.grid(), u)
}

/// Relative residuals of `∇×∇×E − k²nE = 0` and `∇·(nE) = 0` over a mask.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MaxwellResidual {
    pub r_curlcurl: f64,
    pub r_div: f64,
}

#[derive(Clone, Debug)]
pub struct CgoRemainder {
    pub r: VectorField,
    pub iterations: usize,
    pub final_update: f64,
    pub inner_iterations: usize,
    pub residual: MaxwellResidual,
    /// Curl-curl residual of the envelope with spectral derivatives (solver self-consistency).
    pub spectral_residual: f64,
    pub regularized_frequency_count: usize,
    pub lattice_shift: [f64; 3],
}

/// Solver state shared across the outer iterations for one `ζ`.
struct RemainderSystem<'a> {
    params: &'a CgoParams,
    medium: &'a Medium,
    op: FaddeevOperator,
    /// `∇̃(α·η)`
    grad_t_alpha_eta: [Vec<C64>; 3],
}

impl<'a> RemainderSystem<'a> {
    fn new(params: &'a CgoParams, medium: &'a Medium, cfg: &SolverConfig) -> Self {
        let grid = medium.grid;
        let op = FaddeevOperator::new(grid, params.zeta, cfg.lattice, cfg.symbol_floor);
        let eta = params.eta;
        let ae: Vec<C64> = (0..grid.node_count())
            .into_par_iter()
            .map(|i| (0..3).map(|c| medium.alpha[c][i] * eta[c]).sum())
            .collect();
        let grad_t_alpha_eta = if medium.trivial {
            [0, 1, 2].map(|_| vec![C64::new(0.0, 0.0); grid.node_count()])
        } else {
            let basis = SpectralBasis::new(grid, [0.0; 3]);
            let spec = basis.to_spectrum(&ae);
            [0, 1, 2].map(|i| {
                let d = basis.derivative(&spec, i);
                d.iter()
                    .zip(&ae)
                    .map(|(dv, v)| dv + C64::i() * params.zeta[i] * v)
                    .collect()
            })
        };
        RemainderSystem {
            params,
            medium,
            op,
            grad_t_alpha_eta,
        }
    }

    /// `∇̃×R` with spectral derivatives on the operator's lattice.
    fn curl_t(&self, r: &[Vec<C64>; 3]) -> [Vec<C64>; 3] {
        let basis = self.op.basis();
        let specs: Vec<Vec<C64>> = r.iter().map(|c| basis.to_spectrum(c)).collect();
        let d = |c: usize, i: usize| basis.derivative(&specs[c], i);
        let z = self.params.zeta;
        let iz = |a: usize| C64::i() * z[a];
        let comp = |a: usize, b: usize| {
            // (∇̃×R)_c = ∂_a R_b − ∂_b R_a + i(ζ_a R_b − ζ_b R_a), (c, a, b) cyclic
            let p = d(b, a);
            let m = d(a, b);
            (0..p.len())
                .into_par_iter()
                .map(|i| p[i] - m[i] + iz(a) * r[b][i] - iz(b) * r[a][i])
                .collect::<Vec<_>>()
        };
        [comp(1, 2), comp(2, 0), comp(0, 1)]
    }

    /// Right side `−α×(∇̃×R) − (R·∇)α − ∇̃(α·η) + k²(1−n)(η+R)`.
    fn rhs(&self, r: &[Vec<C64>; 3], zero: bool) -> [Vec<C64>; 3] {
        let m = self.medium;
        let count = m.grid.node_count();
        let kk = self.params.k * self.params.k;
        let eta = self.params.eta;
        let q = if zero || m.trivial { None } else { Some(self.curl_t(r)) };
        let nodes: Vec<CVec> = (0..count)
            .into_par_iter()
            .map(|i| {
                let rv = [r[0][i], r[1][i], r[2][i]];
                let f = cadd(eta, rv);
                let mut out = cscale(kk * (C64::new(1.0, 0.0) - m.n[i]), f);
                if !m.trivial {
                    let alpha = [m.alpha[0][i], m.alpha[1][i], m.alpha[2][i]];
                    let gae = [
                        self.grad_t_alpha_eta[0][i],
                        self.grad_t_alpha_eta[1][i],
                        self.grad_t_alpha_eta[2][i],
                    ];
                    out = csub(out, gae);
                    if let Some(q) = &q {
                        let qv = [q[0][i], q[1][i], q[2][i]];
                        out = csub(out, ccross(alpha, qv));
                        let rga = [0, 1, 2].map(|k| (0..3).map(|j| rv[j] * m.grad_alpha[k][j][i]).sum());
                        out = csub(out, rga);
                    }
                }
                out
            })
            .collect();
        [0, 1, 2].map(|c| nodes.iter().map(|v| v[c]).collect())
    }

    /// `∇̃×∇̃×F − k²nF` of `F = η + R` with spectral derivatives.
    fn spectral_residual(&self, r: &[Vec<C64>; 3], mask: &Mask) -> f64 {
        let z = self.params.zeta;
        let eta = self.params.eta;
        let ct = self.curl_t(r);
        let zxe = ccross(z, eta).map(|v| v * C64::i());
        let w: [Vec<C64>; 3] = [0, 1, 2].map(|c| ct[c].iter().map(|v| v + zxe[c]).collect());
        // the constant part iζ×η is handled exactly: ∇̃×(c) = iζ×c
        let basis = self.op.basis();
        let specs: Vec<Vec<C64>> = ct.iter().map(|c| basis.to_spectrum(c)).collect();
        let d = |c: usize, i: usize| basis.derivative(&specs[c], i);
        let curl_q: [Vec<C64>; 3] = [(1, 2), (2, 0), (0, 1)].map(|(a, b)| {
            let p = d(b, a);
            let m = d(a, b);
            p.iter().zip(&m).map(|(x, y)| x - y).collect()
        });
        let kk = self.params.k * self.params.k;
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for i in mask.indices() {
            let wv = [w[0][i], w[1][i], w[2][i]];
            let cc = cadd(
                [curl_q[0][i], curl_q[1][i], curl_q[2][i]],
                cscale(C64::i(), ccross(z, wv)),
            );
            let f = cadd(eta, [r[0][i], r[1][i], r[2][i]]);
            let knf = cscale(kk * self.medium.n[i], f);
            num = num.max(cnorm(csub(cc, knf)));
            den = den.max(cnorm(knf));
        }
        if num == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

/// Iterates `R ← S(RHS(R))` where `S` is the scalarized solve applied per component.
pub fn solve_remainder(params: &CgoParams, medium: &Medium, mask: &Mask, cfg: &SolverConfig) -> Result<CgoRemainder> {
    let grid = medium.grid;
    let sys = RemainderSystem::new(params, medium, cfg);
    let zeros = vec![C64::new(0.0, 0.0); grid.node_count()];
    let mut r: [Vec<C64>; 3] = [zeros.clone(), zeros.clone(), zeros];
    let mut history: Vec<f64> = Vec::new();
    let mut inner_max = 0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=cfg.max_iter {
        let rhs = sys.rhs(&r, it == 1);
        let mut next: Vec<Vec<C64>> = Vec::with_capacity(3);
        for c in rhs.iter() {
            let (u, inner) = solve_scalarized_with(&sys.op, medium, c, cfg.inner_tol, cfg.inner_max_iter)?;
            inner_max = inner_max.max(inner);
            next.push(u);
        }
        let next: [Vec<C64>; 3] = next.try_into().expect("three components");
        let upd = (0..3).map(|c| max_abs_diff(&next[c], &r[c])).fold(0.0, f64::max);
        let scale = (0..3).map(|c| max_abs(&next[c])).fold(0.0, f64::max);
        let upd = if upd == 0.0 {
            0.0
        } else {
            upd / scale.max(f64::MIN_POSITIVE)
        };
        r = next;
        history.push(upd);
        iterations = it;
        if !upd.is_finite() {
            return Err(Error::Divergence {
                iterations: it,
                update: upd,
            });
        }
        if upd < cfg.tol {
            converged = true;
            break;
        }
        let n = history.len();
        if n >= 4
            && history[n - 1] > history[n - 2]
            && history[n - 2] > history[n - 3]
            && history[n - 3] > history[n - 4]
        {
            return Err(Error::Divergence {
                iterations: it,
                update: upd,
            });
        }
    }
    let final_update = *history.last().unwrap_or(&0.0);
    if !converged {
        return Err(Error::MaxIterations {
            iterations: cfg.max_iter,
            update: final_update,
        });
    }
    let spectral_residual = sys.spectral_residual(&r, mask);
    let rf = VectorField::from_components(grid, r)?;
    let envelope = envelope_of(params, &rf);
    let residual = maxwell_residual_modulated(params.zeta, &envelope, &medium.n_field(), params.k, mask);
    Ok(CgoRemainder {
        r: rf,
        iterations,
        final_update,
        inner_iterations: inner_max,
        residual,
        spectral_residual,
        regularized_frequency_count: sys.op.regularized_count(),
        lattice_shift: sys.op.basis().shift(),
    })
}

/// `η + R`.
pub fn envelope_of(params: &CgoParams, r: &VectorField) -> VectorField {
    r.map_nodes(|_, v| cadd(params.eta, v))
}

/// `|e^{iζ·x}|/max |e^{iζ·x}|` at the listed nodes, computed in log space.
pub fn growth_weights(grid: &Grid, zeta: CVec, mask: &[usize]) -> Vec<f64> {
    let im = zeta.map(|z| z.im);
    let logs: Vec<f64> = mask
        .iter()
        .map(|&i| {
            let x = grid.point(i);
            -(im[0] * x[0] + im[1] * x[1] + im[2] * x[2])
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    logs.iter().map(|l| (l - top).exp()).collect()
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Residuals of `E = e^{iζ·x}F` from the envelope `F`, with the phase
/// derivatives taken analytically (`∇ → ∇̃ = ∇ + iζ`) and FD on `F`.
pub fn maxwell_residual_modulated(
    zeta: CVec,
    envelope: &VectorField,
    n: &ScalarField,
    k: f64,
    mask: &Mask,
) -> MaxwellResidual {
    let grid = *envelope.grid();
    let idx = mask.indices();
    if idx.is_empty() {
        return MaxwellResidual::default();
    }
    let cc = curl_curl_envelope(zeta, envelope);
    let jac = jacobian(envelope);
    let nf = envelope.scale_by(n).expect("same grid");
    let div_nf: Vec<C64> = {
        let parts: Vec<Vec<C64>> = (0..3).map(|a| diff_axis(nf.component(a), &grid, a, 1)).collect();
        (0..grid.node_count())
            .map(|i| parts[0][i] + parts[1][i] + parts[2][i])
            .collect()
    };
    let grad_n: Vec<Vec<C64>> = (0..3).map(|a| diff_axis(n.values(), &grid, a, 1)).collect();
    let w = growth_weights(&grid, zeta, &idx);
    let zn = cnorm(zeta);
    let kk = k * k;
    let iu = C64::i();
    let (mut num, mut den, mut dnum, mut dden1, mut dden2) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (t, &i) in idx.iter().enumerate() {
        let f = envelope.at(i);
        let nv = n.values()[i];
        let div_t = jac[0].at(i)[0] + jac[1].at(i)[1] + jac[2].at(i)[2] + iu * cdot(zeta, f);
        let res = csub(cc.at(i), cscale(kk * nv, f));
        num = num.max(w[t] * cnorm(res));
        den = den.max(w[t] * kk * nv.norm() * cnorm(f));
        let gn = [grad_n[0][i], grad_n[1][i], grad_n[2][i]];
        let dv = div_nf[i] + iu * cdot(zeta, nf.at(i));
        dnum = dnum.max(w[t] * dv.norm());
        dden1 = dden1.max(w[t] * cnorm(gn) * cnorm(f));
        dden2 = dden2.max(w[t] * nv.norm() * (div_t.norm() + zn * cnorm(f)));
    }
    MaxwellResidual {
        r_curlcurl: ratio(num, den),
        r_div: ratio(dnum, dden1 + dden2),
    }
}

/// `e^{−iζ·x}∇×∇×(e^{iζ·x}F) = ∇̃(∇̃·F) − Δ̃F` with FD on `F`.
pub fn curl_curl_envelope(zeta: CVec, envelope: &VectorField) -> VectorField {
    let gd = grad_div(envelope);
    let lap = vector_laplacian(envelope);
    let jac = jacobian(envelope);
    let zz = cdot(zeta, zeta);
    let iu = C64::i();
    envelope.map_nodes(|i, f| {
        let div_t = jac[0].component(0)[i] + jac[1].component(1)[i] + jac[2].component(2)[i] + iu * cdot(zeta, f);
        [0, 1, 2].map(|c| {
            // ∂_c(ζ·F) = Σ_j ζ_j ∂_c F_j
            let d_zf: C64 = (0..3).map(|j| zeta[j] * jac[j].component(c)[i]).sum();
            let grad_div_t = gd.component(c)[i] + iu * d_zf + iu * zeta[c] * div_t;
            let z_grad_fc: C64 = (0..3).map(|j| zeta[j] * jac[c].component(j)[i]).sum();
            let lap_t = lap.component(c)[i] + 2.0 * iu * z_grad_fc - zz * f[c];
            grad_div_t - lap_t
        })
    })
}

/// Residuals of a field given by its raw samples (FD applied to `E` itself).
pub fn maxwell_residual(e: &VectorField, n: &ScalarField, k: f64, mask: &Mask) -> MaxwellResidual {
    maxwell_residual_modulated([C64::new(0.0, 0.0); 3], e, n, k, mask)
}

/// `E = e^{iζ·x}(η + R)` with magnitude diagnostics over Ω.
#[derive(Clone, Debug)]
pub struct CgoField {
    pub params: CgoParams,
    /// `η + R`
    pub envelope: VectorField,
    pub min_abs_in_domain: f64,
    pub max_abs_in_domain: f64,
}

impl CgoField {
    /// `E` at every node.
    pub fn values(&self) -> VectorField {
        modulate(&self.envelope, self.params.zeta)
    }
}

/// Assembles `E` from a converged remainder; rejects `ζ` whose growth factor
/// would overflow anywhere on the grid box.
pub fn assemble_cgo(params: &CgoParams, remainder: &CgoRemainder, inside: &Mask) -> Result<CgoField> {
    let grid = *remainder.r.grid();
    let half_diag = 0.5 * 3f64.sqrt() * grid.box_side();
    let exponent = params.growth_exponent(half_diag);
    if exponent > OVERFLOW_EXPONENT {
        return Err(Error::Inadmissible {
            exponent,
            limit: OVERFLOW_EXPONENT,
        });
    }
    let envelope = envelope_of(params, &remainder.r);
    let ph = phase_field(&grid, params.zeta);
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in inside.indices() {
        let m = ph[i].norm() * cnorm(envelope.at(i));
        lo = lo.min(m);
        hi = hi.max(m);
    }
    Ok(CgoField {
        params: params.clone(),
        envelope,
        min_abs_in_domain: if lo.is_finite() { lo } else { 0.0 },
        max_abs_in_domain: hi,
    })
}

/// One row of [`remainder_asymptotics`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub h: f64,
    pub zeta_norm: f64,
    /// `‖R_ζ − i n^{−1/2}G_ζ(n^{1/2}α·η)ζ‖_∞`
    pub leading_term_error: f64,
    /// `‖R_ζ − i|ζ| n^{−1/2}G_ζ(n^{1/2}α·η₀)ζ₀‖_∞`
    pub limit_term_error: f64,
    /// `‖(η₁+R₁)·(η₂+R₂) − 1‖_∞`
    pub product_defect: f64,
    pub iterations: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `log(leading_term_error)` against `log|ζ|`.
    pub leading_slope: Option<f64>,
    pub limit_slope: Option<f64>,
}

/// Least-squares slope of `log y` against `log x`; `None` if any value is not positive.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `i·c·n^{−1/2}G_ζ(n^{1/2}α·v)·w` with `G_ζ` on the lattice of `op`.
fn leading_term(op: &FaddeevOperator, medium: &Medium, v: CVec, w: CVec, c: f64) -> Vec<CVec> {
    let count = medium.grid.node_count();
    let s: Vec<C64> = (0..count)
        .into_par_iter()
        .map(|i| medium.sqrt_n[i] * (0..3).map(|j| medium.alpha[j][i] * v[j]).sum::<C64>())
        .collect();
    let g = op.apply(&s);
    (0..count)
        .into_par_iter()
        .map(|i| cscale(C64::i() * c * g[i] / medium.sqrt_n[i], w))
        .collect()
}

/// Sweeps `h`, solving both members of each pair, and tabulates the
/// remainder against its leading asymptotic terms.
pub fn remainder_asymptotics(
    h_list: &[f64],
    a: f64,
    k: f64,
    frame: &Mat3,
    medium: &Medium,
    mask: &Mask,
    cfg: &SolverConfig,
) -> Result<DecayReport> {
    if h_list.len() < 3 {
        return Err(Error::CgoParams("at least three values of h are required".into()));
    }
    let idx = mask.indices();
    let mut rows = Vec::new();
    for &h in h_list {
        let p1 = make_zeta_eta(h, a, k, frame, 1)?;
        let p2 = make_zeta_eta(h, a, k, frame, 2)?;
        let r1 = solve_remainder(&p1, medium, mask, cfg)?;
        let r2 = solve_remainder(&p2, medium, mask, cfg)?;
        let op = FaddeevOperator::new(medium.grid, p1.zeta, cfg.lattice, cfg.symbol_floor);
        let lead = leading_term(&op, medium, p1.eta, p1.zeta, 1.0);
        let limit = leading_term(&op, medium, p1.eta0(), p1.zeta0(), p1.zeta_norm());
        let mut e_lead: f64 = 0.0;
        let mut e_limit: f64 = 0.0;
        let mut defect: f64 = 0.0;
        for &i in &idx {
            let rv = r1.r.at(i);
            e_lead = e_lead.max(cnorm(csub(rv, lead[i])));
            e_limit = e_limit.max(cnorm(csub(rv, limit[i])));
            let prod = cdot(cadd(p1.eta, rv), cadd(p2.eta, r2.r.at(i)));
            defect = defect.max((prod - 1.0).norm());
        }
        rows.push(DecayRow {
            h,
            zeta_norm: p1.zeta_norm(),
            leading_term_error: e_lead,
            limit_term_error: e_limit,
            product_defect: defect,
            iterations: [r1.iterations, r2.iterations],
        });
    }
    let zn: Vec<f64> = rows.iter().map(|r| r.zeta_norm).collect();
    let lead: Vec<f64> = rows.iter().map(|r| r.leading_term_error).collect();
    let lim: Vec<f64> = rows.iter().map(|r| r.limit_term_error).collect();
    Ok(DecayReport {
        leading_slope: loglog_slope(&zn, &lead),
        limit_slope: loglog_slope(&zn, &lim),
        rows,
    })
}

/// Default measurement frame.
pub fn identity_frame() -> Mat3 {
    IDENTITY
}
