//! Synthetic coefficients, internal data `D = L·E`, boundary traces
//! `G = ν×E` and data perturbations.
//!
//! Data fields are kept in modulated form: `D = e^{iζ·x}P` is stored as the
//! envelope `P` together with `ζ`, which keeps every sample O(1) however
//! large `|Im ζ|` is. The actual values are produced on demand.

use crate::cgo::{assemble_cgo, modulate, solve_remainder, CgoField, CgoParams, CgoRemainder, Medium, SolverConfig};
use crate::domain::{BoundarySample, Domain};
use crate::error::{Error, Result};
use crate::grid::{Grid, Mask, ScalarField, VectorField, C64};
use crate::interp::{Interpolant, Kernel};
use crate::io::{decode_traces, encode_traces, read_vector, write_field, TraceRow};
use crate::norm::discrete_cm_norm;
use crate::vec3::{cscale, rc_cross, rdot, rsub, CVec, RVec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Parameters of the synthetic ground truth.
///
/// `L = 1 + A_L e^{−|x−c_L|²/w_L}`,
/// `σ = ωε₀(σ₀ + A_σ e^{−|x−c_σ|²/w_σ})·χ(|x|)`,
/// `ε = ε₀(1 + A_ε e^{−|x−c_ε|²/w_ε}·χ(|x|))`
/// with `χ` a C^∞ cutoff equal to 1 for `|x| ≤ r₀` and 0 beyond `r₀ + w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientSpec {
    pub l_amplitude: f64,
    pub l_center: RVec,
    pub l_width: f64,
    /// Background conductivity in units of `ωε₀`.
    pub sigma_background: f64,
    /// Bump amplitude in units of `ωε₀`.
    pub sigma_amplitude: f64,
    pub sigma_center: RVec,
    pub sigma_width: f64,
    pub epsilon_amplitude: f64,
    pub epsilon_center: RVec,
    pub epsilon_width: f64,
    pub cutoff_radius: f64,
    pub cutoff_width: f64,
    pub omega: f64,
    pub epsilon0: f64,
    pub mu0: f64,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        CoefficientSpec {
            l_amplitude: 0.5,
            l_center: [0.15, -0.1, 0.1],
            l_width: 0.15,
            sigma_background: 0.2,
            sigma_amplitude: 0.3,
            sigma_center: [-0.15, 0.1, -0.1],
            sigma_width: 0.15,
            epsilon_amplitude: 0.0,
            epsilon_center: [0.0; 3],
            epsilon_width: 0.1,
            cutoff_radius: 1.1,
            cutoff_width: 1.2,
            omega: 1.0,
            epsilon0: 1.0,
            mu0: 1.0,
        }
    }
}

impl CoefficientSpec {
    /// `L ≡ 1`, `σ ≡ 0`, `ε ≡ ε₀`.
    pub fn trivial() -> Self {
        CoefficientSpec {
            l_amplitude: 0.0,
            sigma_background: 0.0,
            sigma_amplitude: 0.0,
            ..Default::default()
        }
    }

    /// The `ε` bump `n = 1 + 0.3e^{−|x|²/0.1}` used to exercise the CGO solver.
    pub fn dielectric_bump() -> Self {
        CoefficientSpec {
            l_amplitude: 0.0,
            sigma_background: 0.0,
            sigma_amplitude: 0.0,
            epsilon_amplitude: 0.3,
            epsilon_width: 0.1,
            cutoff_radius: 2.0,
            cutoff_width: 0.8,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_width", self.l_width),
            ("sigma_width", self.sigma_width),
            ("epsilon_width", self.epsilon_width),
            ("cutoff_width", self.cutoff_width),
            ("omega", self.omega),
            ("epsilon0", self.epsilon0),
            ("mu0", self.mu0),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Forward(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.l_amplitude.is_finite() && self.l_amplitude > -1.0) {
            return Err(Error::Forward(format!(
                "l_amplitude = {} would make L vanish",
                self.l_amplitude
            )));
        }
        if !(self.epsilon_amplitude.is_finite() && self.epsilon_amplitude > -1.0) {
            return Err(Error::Forward("epsilon_amplitude must exceed −1".into()));
        }
        if !(self.sigma_background >= 0.0 && self.sigma_background + self.sigma_amplitude.min(0.0) >= 0.0) {
            return Err(Error::Forward("σ must be nonnegative".into()));
        }
        if !(self.cutoff_radius.is_finite() && self.cutoff_radius > 0.0) {
            return Err(Error::Forward("cutoff_radius must be positive".into()));
        }
        Ok(())
    }

    /// `k = ω√(ε₀μ₀)`.
    pub fn wavenumber(&self) -> f64 {
        self.omega * (self.epsilon0 * self.mu0).sqrt()
    }
}

/// C^∞ step from 0 (t ≤ 0) to 1 (t ≥ 1).
pub fn smoothstep(t: f64) -> f64 {
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let t = t.clamp(0.0, 1.0);
    let a = f(t);
    let b = f(1.0 - t);
    a / (a + b)
}

fn gaussian(x: RVec, c: RVec, w: f64) -> f64 {
    let d = rsub(x, c);
    (-rdot(d, d) / w).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub l: ScalarField,
    pub sigma: ScalarField,
    pub epsilon: ScalarField,
    pub omega: f64,
    pub epsilon0: f64,
    pub mu0: f64,
}

/// Evaluates the ground truth of `spec` at every node.
pub fn synthesize(spec: &CoefficientSpec, grid: &Grid) -> Result<Coefficients> {
    spec.validate()?;
    let cut = |x: RVec| 1.0 - smoothstep((rdot(x, x).sqrt() - spec.cutoff_radius) / spec.cutoff_width);
    let s = spec.omega * spec.epsilon0;
    Ok(Coefficients {
        l: ScalarField::from_real_fn(*grid, |x| {
            1.0 + spec.l_amplitude * gaussian(x, spec.l_center, spec.l_width)
        }),
        sigma: ScalarField::from_real_fn(*grid, |x| {
            s * (spec.sigma_background + spec.sigma_amplitude * gaussian(x, spec.sigma_center, spec.sigma_width))
                * cut(x)
        }),
        epsilon: ScalarField::from_real_fn(*grid, |x| {
            spec.epsilon0
                * (1.0 + spec.epsilon_amplitude * gaussian(x, spec.epsilon_center, spec.epsilon_width) * cut(x))
        }),
        omega: spec.omega,
        epsilon0: spec.epsilon0,
        mu0: spec.mu0,
    })
}

/// `n = (ε + iσ/ω)/ε₀` and `k = ω√(ε₀μ₀)`.
pub fn refractive_index(c: &Coefficients) -> Result<(ScalarField, f64)> {
    if let Some(e) = c.epsilon.values().iter().find(|e| !(e.re > 0.0)) {
        return Err(Error::Forward(format!("nonpositive permittivity {e}")));
    }
    let n = c
        .epsilon
        .zip_map(&c.sigma, |e, s| C64::new(e.re, s.re / c.omega) / c.epsilon0)?;
    Ok((n, c.omega * (c.epsilon0 * c.mu0).sqrt()))
}

/// A field `e^{iζ·x}·envelope`.
#[derive(Clone, Debug, PartialEq)]
pub struct Modulated {
    pub zeta: CVec,
    pub envelope: VectorField,
}

impl Modulated {
    pub fn values(&self) -> VectorField {
        modulate(&self.envelope, self.zeta)
    }

    /// Splits raw samples `D` into `e^{iζ·x}` and an envelope.
    pub fn demodulate(field: &VectorField, zeta: CVec) -> Self {
        Modulated {
            zeta,
            envelope: crate::cgo::demodulate(field, zeta),
        }
    }

    /// Value at an arbitrary point: interpolated envelope times the exact phase.
    pub fn sampler(&self, kernel: Kernel) -> ModulatedSampler {
        let g = *self.envelope.grid();
        ModulatedSampler {
            zeta: self.zeta,
            comps: [0, 1, 2].map(|c| Interpolant::new(g, self.envelope.component(c), kernel)),
        }
    }
}

pub struct ModulatedSampler {
    zeta: CVec,
    comps: [Interpolant<C64>; 3],
}

impl ModulatedSampler {
    pub fn envelope_at(&self, x: RVec) -> CVec {
        [0, 1, 2].map(|c| self.comps[c].eval(x))
    }

    pub fn at(&self, x: RVec) -> CVec {
        let ph = (C64::i() * crate::vec3::c_dot_r(self.zeta, x)).exp();
        cscale(ph, self.envelope_at(x))
    }
}

/// Internal data, boundary illuminations and the traces of the data.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    pub grid: Grid,
    pub params: Vec<CgoParams>,
    pub d: Vec<Modulated>,
    /// `G_j = ν×E_j` at `samples`.
    pub g: Vec<Vec<CVec>>,
    /// `ν×D_j` at `samples`.
    pub d_boundary: Vec<Vec<CVec>>,
    pub samples: Vec<BoundarySample>,
}

impl MeasurementSet {
    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    /// Recomputes `ν×D_j` from the current data fields.
    pub fn refresh_data_traces(&mut self) {
        self.d_boundary = self
            .d
            .iter()
            .map(|d| tangential_trace_modulated(d, &self.samples, Kernel::CubicBSpline))
            .collect();
    }
}

/// `ν×E` at each boundary sample with trilinear interpolation of raw samples.
pub fn tangential_trace(e: &VectorField, samples: &[BoundarySample]) -> Result<Vec<CVec>> {
    let g = *e.grid();
    let half = 0.5 * g.box_side();
    let comps = [0, 1, 2].map(|c| Interpolant::new(g, e.component(c), Kernel::Trilinear));
    samples
        .iter()
        .map(|s| {
            if s.point.iter().any(|v| !(v.abs() < half - g.spacing())) {
                return Err(Error::Forward(format!(
                    "boundary sample {:?} outside the grid interior",
                    s.point
                )));
            }
            Ok(rc_cross(s.normal, [0, 1, 2].map(|c| comps[c].eval(s.point))))
        })
        .collect()
}

/// `ν×D` at each boundary sample from a modulated field.
pub fn tangential_trace_modulated(d: &Modulated, samples: &[BoundarySample], kernel: Kernel) -> Vec<CVec> {
    let s = d.sampler(kernel);
    samples.par_iter().map(|b| rc_cross(b.normal, s.at(b.point))).collect()
}

/// `D_j = L·E_j` and the traces of `E_j` and `D_j`.
pub fn make_internal_data(l: &ScalarField, fields: &[CgoField], domain: &Domain) -> Result<MeasurementSet> {
    let grid = *l.grid();
    let samples = domain.boundary_samples().to_vec();
    let mut d = Vec::with_capacity(fields.len());
    let mut g = Vec::with_capacity(fields.len());
    for f in fields {
        if !f.envelope.grid().same_as(&grid) {
            return Err(Error::Forward("data and mobility grids differ".into()));
        }
        let e = Modulated {
            zeta: f.params.zeta,
            envelope: f.envelope.clone(),
        };
        g.push(tangential_trace_modulated(&e, &samples, Kernel::CubicBSpline));
        d.push(Modulated {
            zeta: f.params.zeta,
            envelope: f.envelope.scale_by(l)?,
        });
    }
    let mut ms = MeasurementSet {
        grid,
        params: fields.iter().map(|f| f.params.clone()).collect(),
        d,
        g,
        d_boundary: Vec::new(),
        samples,
    };
    ms.refresh_data_traces();
    Ok(ms)
}

/// CGO solves for a coefficient set and a list of illuminations.
#[derive(Clone, Debug)]
pub struct ForwardProblem {
    pub domain: Domain,
    pub coefficients: Coefficients,
    pub params: Vec<CgoParams>,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub n: ScalarField,
    pub k: f64,
    pub remainders: Vec<CgoRemainder>,
    pub fields: Vec<CgoField>,
    pub measurements: MeasurementSet,
}

impl ForwardProblem {
    pub fn solve(&self) -> Result<ForwardOutput> {
        let (n, k) = refractive_index(&self.coefficients)?;
        let medium = Medium::new(&n)?;
        let mut remainders = Vec::with_capacity(self.params.len());
        let mut fields = Vec::with_capacity(self.params.len());
        for p in &self.params {
            if (p.k - k).abs() > 1e-12 * k {
                return Err(Error::Forward(format!(
                    "illumination wavenumber {} differs from medium {}",
                    p.k, k
                )));
            }
            let r = solve_remainder(p, &medium, self.domain.inside(), &self.solver)?;
            fields.push(assemble_cgo(p, &r, self.domain.inside())?);
            remainders.push(r);
        }
        let measurements = make_internal_data(&self.coefficients.l, &fields, &self.domain)?;
        Ok(ForwardOutput {
            n,
            k,
            remainders,
            fields,
            measurements,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    #[default]
    SmoothRandom,
    CoefficientPerturbation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub amplitude: f64,
    pub seed: u64,
    pub mode: NoiseMode,
    /// Order of the surrogate norm the smooth-random perturbation is scaled in.
    pub norm_order: usize,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            amplitude: 0.0,
            seed: 0,
            mode: NoiseMode::SmoothRandom,
            norm_order: 2,
        }
    }
}

/// Largest `|m_i|` of the random Fourier modes.
pub const NOISE_BAND: i64 = 2;

/// Band-limited random complex vector field, deterministic in `(seed, stream)`.
pub fn smooth_random_field(grid: &Grid, seed: u64, stream: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut modes = Vec::new();
    for c in 0..3 {
        for mz in -NOISE_BAND..=NOISE_BAND {
            for my in -NOISE_BAND..=NOISE_BAND {
                for mx in -NOISE_BAND..=NOISE_BAND {
                    let m2 = (mx * mx + my * my + mz * mz) as f64;
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    modes.push((c, [mx, my, mz], C64::new(re, im) / (1.0 + m2)));
                }
            }
        }
    }
    let base = 2.0 * std::f64::consts::PI / grid.box_side();
    VectorField::from_fn(*grid, |x| {
        let mut v = [C64::new(0.0, 0.0); 3];
        for (c, m, a) in &modes {
            let ph = base * (m[0] as f64 * x[0] + m[1] as f64 * x[1] + m[2] as f64 * x[2]);
            v[*c] += a * C64::new(0.0, ph).exp();
        }
        v
    })
}

/// Fixed bumps `(ℓ, s)` of the coefficient-perturbation mode.
pub fn perturbation_bumps() -> ((RVec, f64), (RVec, f64)) {
    (([-0.1, 0.1, 0.05], 0.2), ([0.1, -0.05, 0.1], 0.2))
}

/// `(L + δℓ, σ + δωε₀ s)` with `ℓ, s` the fixed bumps.
pub fn perturb_coefficients(c: &Coefficients, delta: f64) -> Result<Coefficients> {
    let ((cl, wl), (cs, ws)) = perturbation_bumps();
    let g = *c.l.grid();
    let scale = c.omega * c.epsilon0;
    let l =
        c.l.zip_map(&ScalarField::from_real_fn(g, |x| gaussian(x, cl, wl)), |a, b| {
            a + delta * b
        })?;
    let sigma = c
        .sigma
        .zip_map(&ScalarField::from_real_fn(g, |x| gaussian(x, cs, ws)), |a, b| {
            a + delta * scale * b
        })?;
    Ok(Coefficients { l, sigma, ..c.clone() })
}

#[derive(Clone, Debug)]
pub struct PerturbedData {
    pub measurements: MeasurementSet,
    /// `max_j ‖P_j − P̃_j‖` in the surrogate norm of `noise.norm_order` over the mask.
    pub data_norm: f64,
}

/// Perturbs every data field; see [`NoiseMode`]. `norm_mask` is where the
/// perturbation size is measured.
pub fn perturb_data(
    problem: &ForwardProblem,
    ms: &MeasurementSet,
    noise: &NoiseSpec,
    norm_mask: &Mask,
) -> Result<PerturbedData> {
    if !(noise.amplitude >= 0.0) || !noise.amplitude.is_finite() {
        return Err(Error::Forward(format!(
            "noise amplitude {} must be nonnegative",
            noise.amplitude
        )));
    }
    if noise.amplitude == 0.0 {
        return Ok(PerturbedData {
            measurements: ms.clone(),
            data_norm: 0.0,
        });
    }
    let out = match noise.mode {
        NoiseMode::SmoothRandom => {
            let mut out = ms.clone();
            for (j, d) in out.d.iter_mut().enumerate() {
                let w = smooth_random_field(&ms.grid, noise.seed, j as u64);
                let size = discrete_cm_norm(&w, noise.norm_order, norm_mask)?.value;
                let s = noise.amplitude / size;
                d.envelope = d.envelope.map_nodes(|i, a| {
                    let b = w.at(i);
                    [0, 1, 2].map(|c| a[c] + s * b[c])
                });
            }
            out.refresh_data_traces();
            out
        }
        NoiseMode::CoefficientPerturbation => {
            let p = ForwardProblem {
                coefficients: perturb_coefficients(&problem.coefficients, noise.amplitude)?,
                ..problem.clone()
            };
            p.solve()?.measurements
        }
    };
    let mut data_norm: f64 = 0.0;
    for (a, b) in ms.d.iter().zip(&out.d) {
        let diff = a.envelope.map_nodes(|i, x| {
            let y = b.envelope.at(i);
            [0, 1, 2].map(|c| x[c] - y[c])
        });
        data_norm = data_norm.max(discrete_cm_norm(&diff, noise.norm_order, norm_mask)?.value);
    }
    Ok(PerturbedData {
        measurements: out,
        data_norm,
    })
}

/// One entry of a measurement manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementEntry {
    pub params: CgoParams,
    /// Field file stem of `D_j` (raw values, not the envelope).
    pub data: String,
    pub traces: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementManifest {
    #[serde(rename = "N")]
    pub n: usize,
    pub box_side: f64,
    pub measurements: Vec<MeasurementEntry>,
}

/// Parses and validates a manifest; every entry's parameters must satisfy
/// the CGO invariants.
pub fn parse_manifest(json: &str) -> Result<MeasurementManifest> {
    let m: MeasurementManifest = serde_json::from_str(json)?;
    Grid::new(m.n, m.box_side)?;
    for e in &m.measurements {
        e.params.check_invariants()?;
        for name in [&e.data, &e.traces] {
            if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                return Err(Error::Format(format!("invalid file stem {name:?}")));
            }
        }
    }
    Ok(m)
}

/// Writes `D_j` field files, trace CSVs and `measurements.json` into `dir`.
pub fn write_measurements(dir: &Path, ms: &MeasurementSet) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::new();
    for (j, d) in ms.d.iter().enumerate() {
        let data = format!("D{}", j + 1);
        let traces = format!("traces{}", j + 1);
        write_field(dir, &data, &d.values().into())?;
        let rows: Vec<TraceRow> = ms
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| TraceRow::new(s, ms.g[j][i], ms.d_boundary[j][i]))
            .collect();
        std::fs::write(dir.join(format!("{traces}.csv")), encode_traces(&rows)?)?;
        entries.push(MeasurementEntry {
            params: ms.params[j].clone(),
            data,
            traces,
        });
    }
    let manifest = MeasurementManifest {
        n: ms.grid.n(),
        box_side: ms.grid.box_side(),
        measurements: entries,
    };
    let path = dir.join("measurements.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Reads back what [`write_measurements`] wrote.
pub fn read_measurements(dir: &Path) -> Result<MeasurementSet> {
    let manifest = parse_manifest(&std::fs::read_to_string(dir.join("measurements.json"))?)?;
    let grid = Grid::new(manifest.n, manifest.box_side)?;
    let mut ms = MeasurementSet {
        grid,
        params: Vec::new(),
        d: Vec::new(),
        g: Vec::new(),
        d_boundary: Vec::new(),
        samples: Vec::new(),
    };
    for e in &manifest.measurements {
        let raw = read_vector(dir, &e.data)?;
        if !raw.grid().same_as(&grid) {
            return Err(Error::Format(format!("{}: grid differs from manifest", e.data)));
        }
        let rows = decode_traces(&std::fs::read(dir.join(format!("{}.csv", e.traces)))?)?;
        let samples: Vec<BoundarySample> = rows
            .iter()
            .map(|r| {
                let t = crate::vec3::orthogonal_unit(r.normal());
                BoundarySample {
                    point: r.point(),
                    normal: r.normal(),
                    tangents: [t, crate::vec3::rcross(r.normal(), t)],
                }
            })
            .collect();
        if ms.samples.is_empty() {
            ms.samples = samples;
        } else if ms.samples.len() != samples.len() || ms.samples.iter().zip(&samples).any(|(a, b)| a.point != b.point)
        {
            return Err(Error::Format(format!(
                "{}: boundary samples differ between measurements",
                e.traces
            )));
        }
        ms.g.push(rows.iter().map(|r| r.g()).collect());
        ms.d_boundary.push(rows.iter().map(|r| r.d()).collect());
        ms.d.push(Modulated::demodulate(&raw, e.params.zeta));
        ms.params.push(e.params.clone());
    }
    Ok(ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, ShapeSpec};

    #[test]
    fn refractive_index_examples() {
        let g = Grid::periodic(16).unwrap();
        let c = synthesize(&CoefficientSpec::trivial(), &g).unwrap();
        let (n, k) = refractive_index(&c).unwrap();
        assert!(n.values().iter().all(|v| *v == C64::new(1.0, 0.0)));
        assert_eq!(k, 1.0);
        let c = Coefficients {
            sigma: ScalarField::constant(g, C64::new(1.0, 0.0)),
            ..c
        };
        let (n, _) = refractive_index(&c).unwrap();
        assert!(n.values().iter().all(|v| (*v - C64::new(1.0, 1.0)).norm() < 1e-15));
        let bad = Coefficients {
            epsilon: ScalarField::zeros(g),
            ..c
        };
        assert!(refractive_index(&bad).is_err());
    }

    #[test]
    fn cutoff_is_smooth_and_supported() {
        assert_eq!(smoothstep(-0.5), 0.0);
        assert_eq!(smoothstep(1.5), 1.0);
        assert!((smoothstep(0.5) - 0.5).abs() < 1e-15);
        let g = Grid::periodic(32).unwrap();
        let c = synthesize(&CoefficientSpec::default(), &g).unwrap();
        let far = g.index(0, 16, 16);
        assert_eq!(c.sigma.values()[far].re, 0.0);
        assert!((c.sigma.values()[g.index(16, 16, 16)].re - 0.2 - 0.3 * (-0.0425f64 / 0.15).exp()).abs() < 1e-12);
    }

    #[test]
    fn trace_of_constant_field() {
        let g = Grid::periodic(32).unwrap();
        let e = VectorField::from_fn(g, |_| [C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let s = BoundarySample {
            point: [0.8, 0.0, 0.0],
            normal: [1.0, 0.0, 0.0],
            tangents: [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        };
        let t = tangential_trace(&e, &[s]).unwrap();
        assert!((t[0][1] + 1.0).norm() < 1e-14 && t[0][0].norm() == 0.0 && t[0][2].norm() == 0.0);
        let outside = BoundarySample {
            point: [3.2, 0.0, 0.0],
            ..s
        };
        assert!(tangential_trace(&e, &[outside]).is_err());
    }

    #[test]
    fn noise_is_deterministic_and_scaled() {
        let g = Grid::periodic(32).unwrap();
        let a = smooth_random_field(&g, 7, 1);
        let b = smooth_random_field(&g, 7, 1);
        let c = smooth_random_field(&g, 7, 2);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let d = build_domain(&ShapeSpec::default(), &g, [0.0, 0.0, 1.0], 0.16).unwrap();
        let n2 = discrete_cm_norm(&a, 2, d.inside()).unwrap().value;
        assert!(n2.is_finite() && n2 > 0.0);
    }
}
