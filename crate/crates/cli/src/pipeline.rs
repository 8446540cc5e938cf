//! Synthesis → CGO solves → data → `L` → `n`, `σ`.

use crate::config::{ConfigError, Pipeline, RunConfig};
use esmax_core::cgo::{CgoParams, MaxwellResidual};
use esmax_core::domain::Domain;
use esmax_core::forward::{perturb_data, synthesize, Coefficients, ForwardOutput, ForwardProblem, MeasurementSet};
use esmax_core::io::write_field;
use esmax_core::matrix::{assemble_gradient_system, integrate_log_mobility, path_independence, PathChoice};
use esmax_core::recovery::{recover_e, recover_n, recover_sigma, recovery_mask, RecoveredIndex};
use esmax_core::transport::{
    boundary_mobility, compare_conventions, direction_diagnostic, solve_transport, transport_field_for_pair,
    transport_identity_residual, Convention, ConventionComparison, TransportField,
};
use esmax_core::{Mask, ScalarField, VectorField};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] esmax_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Input(String),
}

pub type RunResult<T> = Result<T, RunError>;

/// A named threshold and whether it was met.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    /// `"<="`, `">="` or `"within"` (value within `limit` of the target in the name).
    pub relation: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            limit,
            relation: "<=".into(),
            passed: value <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Check {
        Check {
            name: name.into(),
            value,
            limit,
            relation: ">=".into(),
            passed: value >= limit,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Check {
        Check {
            name: name.into(),
            value: ok as u8 as f64,
            limit: 1.0,
            relation: ">=".into(),
            passed: ok,
        }
    }
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

/// Ground truth and noiseless data of one configuration.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub domain: Domain,
    pub problem: ForwardProblem,
    pub output: ForwardOutput,
}

impl Dataset {
    pub fn coefficients(&self) -> &Coefficients {
        &self.problem.coefficients
    }

    pub fn measurements(&self) -> &MeasurementSet {
        &self.output.measurements
    }
}

pub fn forward_problem(cfg: &RunConfig, domain: &Domain, params: Vec<CgoParams>) -> RunResult<ForwardProblem> {
    Ok(ForwardProblem {
        domain: domain.clone(),
        coefficients: synthesize(&cfg.coefficients, domain.grid())?,
        params,
        solver: cfg.cgo.solver.clone(),
    })
}

/// Solves the forward problem of `cfg` at its own `h`.
pub fn synthesize_dataset(cfg: &RunConfig) -> RunResult<Dataset> {
    cfg.validate()?;
    let domain = cfg.domain()?;
    let problem = forward_problem(cfg, &domain, cfg.illuminations(cfg.cgo.h)?)?;
    let output = problem.solve()?;
    Ok(Dataset {
        domain,
        problem,
        output,
    })
}

/// Where `L` is reconstructed: Ω₁ for transport-2, Ω for matrix-6.
pub fn region(pipeline: Pipeline, domain: &Domain) -> &Mask {
    match pipeline {
        Pipeline::Transport2 => domain.omega1(),
        Pipeline::Matrix6 => domain.inside(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportDiagnostics {
    pub convention: Convention,
    pub trace_failures: usize,
    pub seeds: usize,
    pub step: f64,
    pub imag_residual: f64,
    pub unusable_boundary_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixDiagnostics {
    pub path: PathChoice,
    pub companion: PathChoice,
    pub max_condition: f64,
    pub failed_nodes: usize,
    pub region_nodes: usize,
    pub imag_residual: f64,
    pub path_independence_residual: f64,
    pub unusable_boundary_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiagnostics {
    pub region_nodes: usize,
    pub mask_nodes: usize,
    pub below_floor: usize,
}

/// Everything a reconstruction produces from one measurement set.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub pipeline: Pipeline,
    pub region: Mask,
    pub recovery_mask: Mask,
    pub l_rec: ScalarField,
    pub index: RecoveredIndex,
    pub sigma_rec: ScalarField,
    pub epsilon_rec: ScalarField,
    pub transport_fields: Vec<TransportField>,
    pub exit_time: Option<ScalarField>,
    pub gamma: Option<VectorField>,
    pub condition: Option<ScalarField>,
    pub transport: Option<TransportDiagnostics>,
    pub matrix: Option<MatrixDiagnostics>,
    pub recovery: RecoveryDiagnostics,
}

fn transport_fields(cfg: &RunConfig, ms: &MeasurementSet, pairs: usize) -> RunResult<Vec<TransportField>> {
    if ms.len() < 2 * pairs {
        return Err(RunError::Input(format!(
            "{} measurements, {} needed",
            ms.len(),
            2 * pairs
        )));
    }
    (0..pairs)
        .map(|p| {
            Ok(transport_field_for_pair(
                ms,
                2 * p,
                2 * p + 1,
                cfg.transport.convention,
            )?)
        })
        .collect()
}

/// Reconstructs `L`, then `n`, `σ`, `ε` from `ms` with the configured pipeline.
pub fn reconstruct(cfg: &RunConfig, domain: &Domain, ms: &MeasurementSet) -> RunResult<Reconstruction> {
    let bm = boundary_mobility(ms, domain, cfg.transport.boundary_floor)?;
    let region = region(cfg.pipeline, domain).clone();
    let (l_rec, fields, exit_time, gamma, condition, transport, matrix) = match cfg.pipeline {
        Pipeline::Transport2 => {
            let tfs = transport_fields(cfg, ms, 1)?;
            let sol = solve_transport(&tfs[0], &bm, domain, &region, &cfg.transport.trace)?;
            let diag = TransportDiagnostics {
                convention: cfg.transport.convention,
                trace_failures: sol.failures,
                seeds: sol.seeds,
                step: sol.step,
                imag_residual: sol.imag_residual,
                unusable_boundary_samples: bm.unusable_count(),
            };
            (sol.l_rec, tfs, Some(sol.exit_time), None, None, Some(diag), None)
        }
        Pipeline::Matrix6 => {
            let tfs = transport_fields(cfg, ms, 3)?;
            let triple: [TransportField; 3] = [tfs[0].clone(), tfs[1].clone(), tfs[2].clone()];
            let g = assemble_gradient_system(&triple, &region, &cfg.matrix.gradient)?;
            let path = cfg.matrix.path;
            let l = integrate_log_mobility(&g, &bm, domain, &region, path, &cfg.matrix.line)?;
            let other = integrate_log_mobility(&g, &bm, domain, &region, path.companion(), &cfg.matrix.line)?;
            let diag = MatrixDiagnostics {
                path,
                companion: path.companion(),
                max_condition: g.max_condition,
                failed_nodes: g.failed,
                region_nodes: g.region_nodes,
                imag_residual: g.imag_residual,
                path_independence_residual: path_independence(&l, &other, &region),
                unusable_boundary_samples: bm.unusable_count(),
            };
            (l, tfs, None, Some(g.gamma), Some(g.condition), None, Some(diag))
        }
    };
    let e = recover_e(&ms.d, &l_rec, &region, cfg.recovery.l_floor)?;
    let rmask = recovery_mask(&region, &cfg.recovery);
    let index = recover_n(&e, cfg.coefficients.wavenumber(), &rmask, &cfg.recovery)?;
    let (sigma_rec, epsilon_rec) = recover_sigma(&index.n, cfg.coefficients.omega, cfg.coefficients.epsilon0);
    let recovery = RecoveryDiagnostics {
        region_nodes: region.count(),
        mask_nodes: index.mask_nodes,
        below_floor: index.below_floor,
    };
    Ok(Reconstruction {
        pipeline: cfg.pipeline,
        region,
        recovery_mask: rmask,
        l_rec,
        index,
        sigma_rec,
        epsilon_rec,
        transport_fields: fields,
        exit_time,
        gamma,
        condition,
        transport,
        matrix,
        recovery,
    })
}

/// Diagnostics of one CGO solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoDiagnostics {
    pub params: CgoParams,
    pub iterations: usize,
    pub final_update: f64,
    pub residual: MaxwellResidual,
    pub spectral_residual: f64,
    pub regularized_frequency_count: usize,
    pub min_abs_in_domain: f64,
    pub max_abs_in_domain: f64,
}

pub fn cgo_diagnostics(out: &ForwardOutput) -> Vec<CgoDiagnostics> {
    out.remainders
        .iter()
        .zip(&out.fields)
        .map(|(r, f)| CgoDiagnostics {
            params: f.params.clone(),
            iterations: r.iterations,
            final_update: r.final_update,
            residual: r.residual,
            spectral_residual: r.spectral_residual,
            regularized_frequency_count: r.regularized_frequency_count,
            min_abs_in_domain: f.min_abs_in_domain,
            max_abs_in_domain: f.max_abs_in_domain,
        })
        .collect()
}

pub fn max_diff(a: &ScalarField, b: &ScalarField, m: &Mask) -> f64 {
    m.indices()
        .into_iter()
        .map(|i| (a.values()[i] - b.values()[i]).norm())
        .fold(0.0, f64::max)
}

/// Errors against the synthesis ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthComparison {
    /// `‖L_rec − L‖_∞/‖L‖_∞` on the region.
    pub l_error: f64,
    /// `‖n_rec − n‖_∞/‖n‖_∞` on the recovery mask.
    pub n_error: f64,
    /// `‖σ_rec − σ‖_∞/(ωε₀)` on the recovery mask.
    pub sigma_error: f64,
    /// `‖ε_rec − ε‖_∞/ε₀` on the recovery mask.
    pub epsilon_error: f64,
    /// Identity residual of both conventions for each pair, on the region.
    pub conventions: Vec<ConventionComparison>,
    /// `‖β − L²ζ₀‖` of orders 0 and 1 on Ω for each pair.
    pub direction_norms: Vec<[f64; 2]>,
}

pub fn compare_with_truth(
    rec: &Reconstruction,
    c: &Coefficients,
    n_true: &ScalarField,
    ms: &MeasurementSet,
    domain: &Domain,
) -> RunResult<TruthComparison> {
    let m = &rec.recovery_mask;
    let scale = c.omega * c.epsilon0;
    let mut conventions = Vec::new();
    let mut direction_norms = Vec::new();
    for (p, tf) in rec.transport_fields.iter().enumerate() {
        let (i, j) = (2 * p, 2 * p + 1);
        conventions.push(compare_conventions(
            &ms.d[i],
            &ms.d[j],
            &tf.chi,
            tf.direction_ref,
            &c.l,
            &rec.region,
        )?);
        let d = direction_diagnostic(tf, &c.l, tf.direction_ref, domain.inside())?;
        direction_norms.push([d[0].value, d[1].value]);
    }
    Ok(TruthComparison {
        l_error: max_diff(&rec.l_rec, &c.l, &rec.region) / c.l.max_abs_on(&rec.region),
        n_error: max_diff(&rec.index.n, n_true, m) / n_true.max_abs_on(m),
        sigma_error: max_diff(&rec.sigma_rec, &c.sigma, m) / scale,
        epsilon_error: max_diff(&rec.epsilon_rec, &c.epsilon, m) / c.epsilon0,
        conventions,
        direction_norms,
    })
}

/// The summary JSON of a pipeline run. Contains no timings, so identical
/// inputs give identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pipeline: Pipeline,
    pub grid: usize,
    pub h: f64,
    pub seed: u64,
    pub noise_amplitude: f64,
    /// Size of the applied perturbation in the surrogate norm (0 without noise).
    pub data_norm: f64,
    pub cgo: Vec<CgoDiagnostics>,
    pub transport: Option<TransportDiagnostics>,
    pub matrix: Option<MatrixDiagnostics>,
    pub recovery: RecoveryDiagnostics,
    pub truth: TruthComparison,
    pub checks: Vec<Check>,
    pub passed: bool,
}

#[derive(Clone, Debug)]
pub struct ReconstructionReport {
    pub summary: Summary,
    pub dataset: Dataset,
    /// The data actually inverted (perturbed when noise is configured).
    pub data: MeasurementSet,
    pub reconstruction: Reconstruction,
}

pub fn pipeline_checks(cfg: &RunConfig, rec: &Reconstruction, truth: &TruthComparison) -> Vec<Check> {
    let t = &cfg.tolerances;
    let mut checks = vec![
        Check::at_most("l_error", truth.l_error, t.l_rel),
        Check::at_most("sigma_error", truth.sigma_error, t.sigma_rel),
    ];
    if let Some(m) = &rec.matrix {
        checks.push(Check::at_most(
            "path_independence",
            m.path_independence_residual,
            t.path_independence,
        ));
    }
    checks
}

/// Runs the configured pipeline on synthetic data, noisy if `cfg.noise` says so.
pub fn run_pipeline(cfg: &RunConfig) -> RunResult<ReconstructionReport> {
    let dataset = synthesize_dataset(cfg)?;
    let data_region = region(cfg.pipeline, &dataset.domain);
    let noise = crate::config::noise_at(&cfg.noise, cfg.noise.amplitude, cfg.seed.0);
    let perturbed = perturb_data(&dataset.problem, dataset.measurements(), &noise, data_region)?;
    let rec = reconstruct(cfg, &dataset.domain, &perturbed.measurements)?;
    run_report(cfg, dataset, perturbed.measurements, perturbed.data_norm, rec)
}

fn run_report(
    cfg: &RunConfig,
    dataset: Dataset,
    data: MeasurementSet,
    data_norm: f64,
    rec: Reconstruction,
) -> RunResult<ReconstructionReport> {
    let truth = compare_with_truth(&rec, dataset.coefficients(), &dataset.output.n, &data, &dataset.domain)?;
    let checks = pipeline_checks(cfg, &rec, &truth);
    let summary = Summary {
        pipeline: cfg.pipeline,
        grid: cfg.grid.n,
        h: cfg.cgo.h,
        seed: cfg.seed.0,
        noise_amplitude: cfg.noise.amplitude,
        data_norm,
        cgo: cgo_diagnostics(&dataset.output),
        transport: rec.transport.clone(),
        matrix: rec.matrix.clone(),
        recovery: rec.recovery.clone(),
        truth,
        passed: all_passed(&checks),
        checks,
    };
    Ok(ReconstructionReport {
        summary,
        dataset,
        data,
        reconstruction: rec,
    })
}

/// Reconstructs from measurements on disk; errors are against the
/// configured ground truth, which must match the data's grid.
pub fn run_from_measurements(cfg: &RunConfig, dir: &Path) -> RunResult<ReconstructionReport> {
    cfg.validate()?;
    let ms = esmax_core::forward::read_measurements(dir)?;
    let domain = cfg.domain()?;
    if !ms.grid.same_as(domain.grid()) {
        return Err(RunError::Input(format!(
            "measurements are on a {}³ grid, the config on {}³",
            ms.grid.n(),
            domain.grid().n()
        )));
    }
    let problem = forward_problem(cfg, &domain, ms.params.clone())?;
    let (n, k) = esmax_core::forward::refractive_index(&problem.coefficients)?;
    let rec = reconstruct(cfg, &domain, &ms)?;
    let dataset = Dataset {
        domain,
        problem,
        output: ForwardOutput {
            n,
            k,
            remainders: Vec::new(),
            fields: Vec::new(),
            measurements: ms.clone(),
        },
    };
    run_report(cfg, dataset, ms, 0.0, rec)
}

/// A file written under `--out`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: PathBuf,
    pub kind: String,
}

pub fn entry(out: &Path, path: &Path, kind: &str) -> FileEntry {
    FileEntry {
        path: path.strip_prefix(out).unwrap_or(path).to_path_buf(),
        kind: kind.into(),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> RunResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Field files, measurements and `summary.json`.
pub fn write_artifacts(report: &ReconstructionReport, out: &Path) -> RunResult<Vec<FileEntry>> {
    let fields = out.join("fields");
    let rec = &report.reconstruction;
    let c = report.dataset.coefficients();
    let mut files = Vec::new();
    let mut put = |name: &str, f: &ScalarField, kind: &str| -> RunResult<()> {
        let p = write_field(&fields, name, &f.clone().into())?;
        files.push(entry(out, &p, kind));
        Ok(())
    };
    put("l_true", &c.l, "field")?;
    put("sigma_true", &c.sigma, "field")?;
    put("l_rec", &rec.l_rec, "field")?;
    put("n_rec", &rec.index.n, "field")?;
    put("sigma_rec", &rec.sigma_rec, "field")?;
    put("epsilon_rec", &rec.epsilon_rec, "field")?;
    put("weight", &rec.index.weight, "field")?;
    if let Some(t) = &rec.exit_time {
        put("exit_time", t, "field")?;
    }
    if let Some(k) = &rec.condition {
        put("condition", k, "field")?;
    }
    let region = rec.region.bits().iter().map(|&b| (b as u8 as f64).into()).collect();
    put("region", &ScalarField::from_values(*rec.region.grid(), region)?, "mask")?;
    let p = esmax_core::forward::write_measurements(&out.join("measurements"), &report.data)?;
    files.push(entry(out, &p, "measurements"));
    let summary = out.join("summary.json");
    write_json(&summary, &report.summary)?;
    files.push(entry(out, &summary, "summary"));
    Ok(files)
}

/// `L` read back from a reconstruction directory.
pub fn read_mobility(dir: &Path) -> RunResult<ScalarField> {
    Ok(esmax_core::io::read_scalar(&dir.join("fields"), "l_rec")?)
}

pub fn default_measurement_dir(out: &Path) -> PathBuf {
    out.join("measurements")
}

/// Recovery stage alone, from given data and mobility.
pub fn recover_only(
    cfg: &RunConfig,
    domain: &Domain,
    ms: &MeasurementSet,
    l: &ScalarField,
) -> RunResult<(Mask, RecoveredIndex, ScalarField)> {
    let region = region(cfg.pipeline, domain);
    let e = recover_e(&ms.d, l, region, cfg.recovery.l_floor)?;
    let m = recovery_mask(region, &cfg.recovery);
    let idx = recover_n(&e, cfg.coefficients.wavenumber(), &m, &cfg.recovery)?;
    let (sigma, _) = recover_sigma(&idx.n, cfg.coefficients.omega, cfg.coefficients.epsilon0);
    Ok((m, idx, sigma))
}

/// Residual of `β·∇L + γL` with the true `L` on Ω₁ for the first pair.
pub fn identity_residual(cfg: &RunConfig, ds: &Dataset) -> RunResult<f64> {
    let tf = transport_field_for_pair(ds.measurements(), 0, 1, cfg.transport.convention)?;
    Ok(transport_identity_residual(
        &tf,
        &ds.coefficients().l,
        ds.domain.omega1(),
    ))
}
