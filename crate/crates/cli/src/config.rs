//! Run configuration: a single TOML file where every key has a default.

use esmax_core::cgo::{check_admissible, make_zeta_eta, CgoParams, SolverConfig};
use esmax_core::domain::{build_domain, Domain, ShapeSpec};
use esmax_core::forward::{CoefficientSpec, NoiseMode, NoiseSpec};
use esmax_core::matrix::{
    build_measurement_frames, default_frames, GradientSystemConfig, LineIntegralConfig, PathChoice,
};
use esmax_core::recovery::RecoveryConfig;
use esmax_core::transport::{Convention, TraceConfig};
use esmax_core::vec3::{is_rotation, re, rnorm, Mat3};
use esmax_core::Grid;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Two measurements, transport along characteristics, valid on Ω₁.
    #[default]
    #[value(name = "transport-2")]
    #[serde(rename = "transport-2")]
    Transport2,
    /// Six measurements, `∇L + ΓL = 0` integrated along chords, valid on Ω.
    #[value(name = "matrix-6")]
    #[serde(rename = "matrix-6")]
    Matrix6,
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pipeline::Transport2 => "transport-2",
            Pipeline::Matrix6 => "matrix-6",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub box_side: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 64,
            box_side: 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub shape: ShapeSpec,
    /// Ω₁ exclusion radius as a fraction of the largest semi-axis.
    pub r_cut_fraction: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            shape: ShapeSpec::default(),
            r_cut_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgoConfig {
    /// Asymptotic parameter of the reconstruction runs.
    pub h: f64,
    pub a: f64,
    /// Measurement frames; transport-2 uses the first.
    pub frames: [Mat3; 3],
    /// Upper bound on `|Im ζ|·diam(Ω)`.
    pub admissibility_limit: f64,
    pub solver: SolverConfig,
}

impl Default for CgoConfig {
    fn default() -> Self {
        CgoConfig {
            h: 0.05,
            a: 0.0,
            frames: default_frames(),
            admissibility_limit: 40.0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub convention: Convention,
    pub trace: TraceConfig,
    /// Samples where `Σ_j|G_j|²` is below this fraction of its maximum are unusable.
    pub boundary_floor: f64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            convention: Convention::DerivedIdentity,
            trace: TraceConfig::default(),
            boundary_floor: 1e-12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub gradient: GradientSystemConfig,
    pub line: LineIntegralConfig,
    pub path: PathChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub deltas: Vec<f64>,
    pub data_order: usize,
    pub l_order: usize,
    pub sigma_order: usize,
    /// Seeds of the exit-map comparison (a regular subsample of Ω₁).
    pub exit_seeds: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            deltas: vec![1e-4, 1e-3, 1e-2],
            data_order: 2,
            l_order: 1,
            sigma_order: 0,
            exit_seeds: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMedium {
    /// `n = 1 + 0.3e^{−|x|²/0.1}`, `L ≡ 1`.
    #[default]
    DielectricBump,
    /// The configured coefficients.
    Configured,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayConfig {
    pub h: Vec<f64>,
    pub medium: DecayMedium,
    /// `|ζ|` values of the operator-norm probe.
    pub zeta_norms: Vec<f64>,
    pub probes: usize,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            h: vec![0.2, 0.1, 0.05],
            medium: DecayMedium::DielectricBump,
            zeta_norms: vec![10.0, 20.0, 40.0],
            probes: 10,
        }
    }
}

/// Thresholds behind the exit code.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `‖L_rec − L‖_∞/‖L‖_∞`
    pub l_rel: f64,
    /// `‖σ_rec − σ‖_∞/(ωε₀)`
    pub sigma_rel: f64,
    pub path_independence: f64,
    pub identity_residual: f64,
    pub trivial: f64,
    pub remainder_slope: f64,
    pub remainder_slope_window: f64,
    pub direction_slope_min: f64,
    /// Allowed deviation of successive operator-norm ratios from 2.
    pub green_ratio: f64,
    pub stability_spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            l_rel: 0.05,
            sigma_rel: 0.1,
            path_independence: 1e-3,
            identity_residual: 1e-2,
            trivial: 1e-6,
            remainder_slope: -1.0,
            remainder_slope_window: 0.3,
            direction_slope_min: 0.7,
            green_ratio: 0.25,
            stability_spread: 5.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Seed,
    pub out: PathBuf,
    pub pipeline: Pipeline,
    pub grid: GridConfig,
    pub domain: DomainConfig,
    pub coefficients: CoefficientSpec,
    pub cgo: CgoConfig,
    pub transport: TransportConfig,
    pub matrix: MatrixConfig,
    pub recovery: RecoveryConfig,
    pub noise: NoiseSpec,
    pub stability: StabilityConfig,
    pub decay: DecayConfig,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: Seed(0),
            out: PathBuf::from("out"),
            pipeline: Pipeline::default(),
            grid: GridConfig::default(),
            domain: DomainConfig::default(),
            coefficients: CoefficientSpec::default(),
            cgo: CgoConfig::default(),
            transport: TransportConfig::default(),
            matrix: MatrixConfig::default(),
            recovery: RecoveryConfig::default(),
            noise: NoiseSpec::default(),
            stability: StabilityConfig::default(),
            decay: DecayConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

/// A `u64` seed. TOML integers are signed, so values above `i64::MAX`
/// are written as strings.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

impl Serialize for Seed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(self.0) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&self.0.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Unsigned(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(v) => u64::try_from(v)
                .map(Seed)
                .map_err(|_| serde::de::Error::custom("seed must be nonnegative")),
            Repr::Unsigned(v) => Ok(Seed(v)),
            Repr::Text(t) => t.parse().map(Seed).map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config: cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("config: {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(self.grid.n, self.grid.box_side).map_err(|e| match e {
            esmax_core::Error::Grid(m) => invalid("grid", m),
            other => invalid("grid", other.to_string()),
        })
    }

    /// The two illuminations of transport-2 (first frame) at `h`.
    pub fn pair(&self, h: f64) -> Result<[CgoParams; 2], ConfigError> {
        let k = self.coefficients.wavenumber();
        let f = &self.cgo.frames[0];
        let p = |i| make_zeta_eta(h, self.cgo.a, k, f, i).map_err(|e| invalid("cgo.h", e.to_string()));
        Ok([p(1)?, p(2)?])
    }

    /// All illuminations of the configured pipeline at `h`.
    pub fn illuminations(&self, h: f64) -> Result<Vec<CgoParams>, ConfigError> {
        match self.pipeline {
            Pipeline::Transport2 => Ok(self.pair(h)?.to_vec()),
            Pipeline::Matrix6 => {
                build_measurement_frames(self.coefficients.wavenumber(), h, self.cgo.a, &self.cgo.frames)
                    .map(|f| f.params)
                    .map_err(|e| invalid("cgo.frames", e.to_string()))
            }
        }
    }

    /// Ω and Ω₁ on the configured grid. Ω₁ is cut around the points where
    /// the boundary is tangent to `Re ζ₀` of the first frame.
    pub fn domain(&self) -> Result<Domain, ConfigError> {
        let grid = self.grid()?;
        let [p, _] = self.pair(self.cgo.h)?;
        let r_cut = self.domain.r_cut_fraction * self.domain.shape.max_semi_axis();
        build_domain(&self.domain.shape, &grid, re(p.zeta0()), r_cut).map_err(|e| invalid("domain", e.to_string()))
    }

    /// Checks every key against the preconditions of the modules that use it.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let domain = self.domain()?;
        if !(0.0..1.0).contains(&self.domain.r_cut_fraction) {
            return Err(invalid("domain.r_cut_fraction", "must lie in [0, 1)"));
        }
        if domain.omega1().count() == 0 {
            return Err(invalid("domain.r_cut_fraction", "Ω₁ contains no grid node"));
        }
        self.coefficients
            .validate()
            .map_err(|e| invalid("coefficients", e.to_string()))?;
        for (j, f) in self.cgo.frames.iter().enumerate() {
            if !is_rotation(f, 1e-9) {
                return Err(invalid("cgo.frames", format!("frame {j} is not a rotation")));
            }
        }
        if !(self.cgo.admissibility_limit > 0.0) {
            return Err(invalid("cgo.admissibility_limit", "must be positive"));
        }
        if !(self.cgo.solver.tol > 0.0 && self.cgo.solver.max_iter > 0 && self.cgo.solver.symbol_floor > 0.0) {
            return Err(invalid("cgo.solver", "tol, max_iter and symbol_floor must be positive"));
        }
        self.check_h("cgo.h", self.cgo.h, &domain)?;
        self.illuminations(self.cgo.h)?;
        let t = &self.transport.trace;
        if !(t.step_fraction > 0.0 && t.step_fraction <= 1.0) {
            return Err(invalid("transport.trace.step_fraction", "must lie in (0, 1]"));
        }
        if t.max_steps == 0 || !(t.boundary_tol > 0.0) || !(0.0..=1.0).contains(&t.max_failure_fraction) {
            return Err(invalid(
                "transport.trace",
                "max_steps, boundary_tol must be positive and max_failure_fraction in [0, 1]",
            ));
        }
        if !(self.transport.boundary_floor >= 0.0 && self.transport.boundary_floor < 1.0) {
            return Err(invalid("transport.boundary_floor", "must lie in [0, 1)"));
        }
        if !(self.matrix.gradient.cond_max >= 1.0) || !(0.0..=1.0).contains(&self.matrix.gradient.max_failure_fraction)
        {
            return Err(invalid(
                "matrix.gradient",
                "cond_max must be ≥ 1 and max_failure_fraction in [0, 1]",
            ));
        }
        if !(self.matrix.line.segment_fraction > 0.0 && self.matrix.line.segment_fraction <= 1.0) {
            return Err(invalid("matrix.line.segment_fraction", "must lie in (0, 1]"));
        }
        if let PathChoice::Direction(d) = self.matrix.path {
            if !(rnorm(d) > 0.0 && rnorm(d).is_finite()) {
                return Err(invalid("matrix.path", "direction must be a nonzero vector"));
            }
        }
        let r = &self.recovery;
        if !(r.l_floor > 0.0) || !(r.weight_floor >= 0.0) || !(0.0..=1.0).contains(&r.max_below_floor) {
            return Err(invalid(
                "recovery",
                "l_floor must be positive, weight_floor ≥ 0, max_below_floor in [0, 1]",
            ));
        }
        if !(self.noise.amplitude >= 0.0 && self.noise.amplitude.is_finite()) {
            return Err(invalid("noise.amplitude", "must be a nonnegative number"));
        }
        if self.noise.norm_order > 3 {
            return Err(invalid("noise.norm_order", "surrogate norms exist for orders 0..=3"));
        }
        let s = &self.stability;
        let positive: Vec<f64> = s.deltas.iter().copied().filter(|d| *d > 0.0).collect();
        if s.deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
            return Err(invalid("stability.deltas", "amplitudes must be nonnegative"));
        }
        let span =
            positive.iter().fold(0.0f64, |m, d| m.max(*d)) / positive.iter().fold(f64::INFINITY, |m, d| m.min(*d));
        if positive.len() < 3 || !(span >= 100.0 * (1.0 - 1e-12)) {
            return Err(invalid(
                "stability.deltas",
                "need at least three positive amplitudes spanning two decades",
            ));
        }
        if s.data_order > 3 || s.l_order > 3 || s.sigma_order > 3 {
            return Err(invalid("stability", "norm orders must lie in 0..=3"));
        }
        if s.exit_seeds == 0 {
            return Err(invalid("stability.exit_seeds", "must be positive"));
        }
        if self.noise.mode == NoiseMode::CoefficientPerturbation && self.noise.amplitude > 0.5 {
            return Err(invalid(
                "noise.amplitude",
                "coefficient perturbations above 0.5 can make L vanish",
            ));
        }
        let d = &self.decay;
        if d.h.len() < 3 {
            return Err(invalid("decay.h", "need at least three values"));
        }
        for &h in &d.h {
            self.check_h("decay.h", h, &domain)?;
        }
        if d.zeta_norms.len() < 2 || d.zeta_norms.iter().any(|z| !(*z > self.coefficients.wavenumber())) {
            return Err(invalid("decay.zeta_norms", "need at least two values above k"));
        }
        if d.probes == 0 {
            return Err(invalid("decay.probes", "must be positive"));
        }
        let tol = &self.tolerances;
        for (key, v) in [
            ("tolerances.l_rel", tol.l_rel),
            ("tolerances.sigma_rel", tol.sigma_rel),
            ("tolerances.path_independence", tol.path_independence),
            ("tolerances.identity_residual", tol.identity_residual),
            ("tolerances.trivial", tol.trivial),
            ("tolerances.remainder_slope_window", tol.remainder_slope_window),
            ("tolerances.green_ratio", tol.green_ratio),
            ("tolerances.stability_spread", tol.stability_spread),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(key, "must be positive"));
            }
        }
        Ok(())
    }

    fn check_h(&self, key: &'static str, h: f64, domain: &Domain) -> Result<(), ConfigError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid(key, format!("h = {h} must be positive")));
        }
        for p in self.pair(h)? {
            check_admissible(&p, domain.diameter(), self.cgo.admissibility_limit)
                .map_err(|e| invalid(key, e.to_string()))?;
        }
        Ok(())
    }
}

/// Convenience for the noise of one stability row.
pub fn noise_at(base: &NoiseSpec, amplitude: f64, seed: u64) -> NoiseSpec {
    NoiseSpec {
        amplitude,
        seed,
        ..base.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c =
            RunConfig::from_toml("pipeline = \"matrix-6\"\n[grid]\nn = 32\n[matrix]\npath = \"far-side\"\n").unwrap();
        assert_eq!(c.pipeline, Pipeline::Matrix6);
        assert_eq!(c.grid.n, 32);
        assert_eq!(c.matrix.path, PathChoice::FarSide);
        assert_eq!(c.cgo, CgoConfig::default());
    }

    #[test]
    fn large_seed_round_trips() {
        let c = RunConfig {
            seed: Seed(u64::MAX),
            ..Default::default()
        };
        assert_eq!(
            RunConfig::from_toml(&c.to_toml().unwrap()).unwrap().seed,
            Seed(u64::MAX)
        );
        assert!(RunConfig::from_toml("seed = -1").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[grid]\nsize = 3").is_err());
        assert!(RunConfig::from_toml("colour = 1").is_err());
    }

    #[test]
    fn validation_names_the_key() {
        let key = |c: RunConfig| match c.validate() {
            Err(ConfigError::Invalid { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        let mut c = RunConfig::default();
        c.grid.n = 24;
        assert!(c.validate().is_ok());
        c.cgo.h = 0.01;
        assert_eq!(key(c.clone()), "cgo.h");
        c.cgo.h = 0.05;
        c.stability.deltas = vec![1e-3, 2e-3, 4e-3];
        assert_eq!(key(c.clone()), "stability.deltas");
        c.stability.deltas = vec![0.0, 1e-4, 1e-3, 1e-2];
        assert!(c.validate().is_ok());
        c.coefficients.l_amplitude = -1.5;
        assert_eq!(key(c.clone()), "coefficients");
        c.coefficients.l_amplitude = 0.5;
        c.cgo.frames[1] = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert_eq!(key(c.clone()), "cgo.frames");
        c.cgo.frames = default_frames();
        c.pipeline = Pipeline::Matrix6;
        c.cgo.frames[2] = c.cgo.frames[0];
        assert_eq!(key(c.clone()), "cgo.frames");
        c.cgo.frames = default_frames();
        c.decay.h = vec![0.2, 0.1];
        assert_eq!(key(c.clone()), "decay.h");
        c.decay.h = vec![0.2, 0.1, 0.05];
        c.domain.r_cut_fraction = 1.2;
        assert_eq!(key(c.clone()), "domain.r_cut_fraction");
        c.domain.r_cut_fraction = 0.2;
        c.domain.shape = ShapeSpec::Ball {
            center: [0.0; 3],
            radius: 3.5,
        };
        assert_eq!(key(c.clone()), "domain");
        c.domain.shape = ShapeSpec::default();
        c.tolerances.l_rel = 0.0;
        assert_eq!(key(c), "tolerances.l_rel");
    }
}
