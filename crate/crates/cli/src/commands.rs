//! The subcommands, each writing its outputs under one directory.

use crate::config::RunConfig;
use crate::experiments::{cgo_check, decay_sweep, stability_experiment, DecaySweep, StabilityReport};
use crate::export::{export_plot_data, PlotInputs, SliceFields};
use crate::pipeline::{
    all_passed, cgo_diagnostics, default_measurement_dir, entry, forward_problem, identity_residual, max_diff,
    read_mobility, recover_only, run_from_measurements, run_pipeline, synthesize_dataset, write_artifacts, write_json,
    CgoDiagnostics, Check, FileEntry, RunError, RunResult,
};
use esmax_core::forward::{read_measurements, refractive_index, write_measurements};
use esmax_core::io::{read_scalar, write_field};
use esmax_core::ScalarField;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    CgoCheck,
    Forward,
    /// With `data`, reconstructs from measurements on disk instead of synthesizing.
    Reconstruct {
        data: Option<PathBuf>,
    },
    /// With `from`, uses `fields/l_rec` and `measurements/` of an earlier
    /// reconstruction; without, the synthetic data and the true `L`.
    RecoverSigma {
        from: Option<PathBuf>,
    },
    Stability,
    DecaySweep,
    /// Reads `decay.json`, `stability.json` and fields from `from` (default: the output dir).
    ExportPlots {
        from: Option<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::CgoCheck => "cgo-check",
            Command::Forward => "forward",
            Command::Reconstruct { .. } => "reconstruct",
            Command::RecoverSigma { .. } => "recover-sigma",
            Command::Stability => "stability",
            Command::DecaySweep => "decay-sweep",
            Command::ExportPlots { .. } => "export-plots",
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub files: Vec<FileEntry>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        all_passed(&self.checks)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardReport {
    pub grid: usize,
    pub h: f64,
    pub measurements: usize,
    pub cgo: Vec<CgoDiagnostics>,
    /// Transport identity with the true `L` on Ω₁, first pair.
    pub identity_residual: f64,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    /// `"truth"` or the directory `L` was read from.
    pub mobility_source: String,
    pub mask_nodes: usize,
    pub below_floor: usize,
    pub n_error: f64,
    pub sigma_error: f64,
    pub checks: Vec<Check>,
}

pub fn execute(cmd: &Command, cfg: &RunConfig, out: &Path) -> RunResult<Outcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    match cmd {
        Command::CgoCheck => {
            let r = cgo_check(cfg)?;
            let p = out.join("cgo_check.json");
            write_json(&p, &r)?;
            Ok(Outcome {
                files: vec![entry(out, &p, "report")],
                checks: r.checks,
            })
        }
        Command::Forward => forward(cfg, out),
        Command::Reconstruct { data } => {
            let report = match data {
                Some(dir) => run_from_measurements(cfg, dir)?,
                None => run_pipeline(cfg)?,
            };
            Ok(Outcome {
                files: write_artifacts(&report, out)?,
                checks: report.summary.checks,
            })
        }
        Command::RecoverSigma { from } => recover(cfg, from.as_deref(), out),
        Command::Stability => {
            let r = stability_experiment(cfg, &cfg.stability.deltas)?;
            let p = out.join("stability.json");
            write_json(&p, &r)?;
            Ok(Outcome {
                files: vec![entry(out, &p, "report")],
                checks: r.checks,
            })
        }
        Command::DecaySweep => {
            let r = decay_sweep(cfg)?;
            let p = out.join("decay.json");
            write_json(&p, &r)?;
            Ok(Outcome {
                files: vec![entry(out, &p, "report")],
                checks: r.checks,
            })
        }
        Command::ExportPlots { from } => {
            let src = from.as_deref().unwrap_or(out);
            let inputs = load_plot_inputs(src)?;
            let files = export_plot_data(&inputs, &out.join("plots"))?;
            Ok(Outcome {
                files: files.iter().map(|p| entry(out, p, "csv")).collect(),
                checks: Vec::new(),
            })
        }
    }
}

fn forward(cfg: &RunConfig, out: &Path) -> RunResult<Outcome> {
    let ds = synthesize_dataset(cfg)?;
    let fields = out.join("fields");
    let c = ds.coefficients();
    let mut files = Vec::new();
    for (name, f) in [
        ("l_true", &c.l),
        ("sigma_true", &c.sigma),
        ("epsilon_true", &c.epsilon),
        ("n_true", &ds.output.n),
    ] {
        let p = write_field(&fields, name, &f.clone().into())?;
        files.push(entry(out, &p, "field"));
    }
    let p = write_measurements(&default_measurement_dir(out), ds.measurements())?;
    files.push(entry(out, &p, "measurements"));
    let residual = identity_residual(cfg, &ds)?;
    let checks = vec![Check::at_most(
        "identity_residual",
        residual,
        cfg.tolerances.identity_residual,
    )];
    let report = ForwardReport {
        grid: cfg.grid.n,
        h: cfg.cgo.h,
        measurements: ds.measurements().d.len(),
        cgo: cgo_diagnostics(&ds.output),
        identity_residual: residual,
        checks: checks.clone(),
    };
    let p = out.join("forward.json");
    write_json(&p, &report)?;
    files.push(entry(out, &p, "report"));
    Ok(Outcome { files, checks })
}

fn recover(cfg: &RunConfig, from: Option<&Path>, out: &Path) -> RunResult<Outcome> {
    let domain = cfg.domain()?;
    let (ms, l, source) = match from {
        Some(dir) => {
            let ms = read_measurements(&default_measurement_dir(dir))?;
            (ms, read_mobility(dir)?, dir.display().to_string())
        }
        None => {
            let ds = synthesize_dataset(cfg)?;
            let l = ds.coefficients().l.clone();
            (ds.output.measurements, l, "truth".to_string())
        }
    };
    if !ms.grid.same_as(domain.grid()) || !l.grid().same_as(domain.grid()) {
        return Err(RunError::Input(format!(
            "inputs are on a {}³ grid, the config on {}³",
            ms.grid.n(),
            domain.grid().n()
        )));
    }
    let problem = forward_problem(cfg, &domain, ms.params.clone())?;
    let c = &problem.coefficients;
    let (n_true, _) = refractive_index(c)?;
    let (mask, idx, sigma) = recover_only(cfg, &domain, &ms, &l)?;
    let n_error = max_diff(&idx.n, &n_true, &mask) / n_true.max_abs_on(&mask);
    let sigma_error = max_diff(&sigma, &c.sigma, &mask) / (c.omega * c.epsilon0);
    let checks = vec![Check::at_most("sigma_error", sigma_error, cfg.tolerances.sigma_rel)];
    let fields = out.join("fields");
    let mut files = Vec::new();
    for (name, f) in [("n_rec", &idx.n), ("sigma_rec", &sigma), ("weight", &idx.weight)] {
        let p = write_field(&fields, name, &f.clone().into())?;
        files.push(entry(out, &p, "field"));
    }
    let report = RecoveryReport {
        mobility_source: source,
        mask_nodes: idx.mask_nodes,
        below_floor: idx.below_floor,
        n_error,
        sigma_error,
        checks: checks.clone(),
    };
    let p = out.join("recovery.json");
    write_json(&p, &report)?;
    files.push(entry(out, &p, "report"));
    Ok(Outcome { files, checks })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> RunResult<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_str(&std::fs::read_to_string(path)?)?))
}

fn read_field_if(dir: &Path, name: &str) -> RunResult<Option<ScalarField>> {
    let (header, _) = esmax_core::io::field_paths(dir, name);
    if !header.exists() {
        return Ok(None);
    }
    Ok(Some(read_scalar(dir, name)?))
}

/// Missing pieces are left out; a missing directory is an error.
pub fn load_plot_inputs(dir: &Path) -> RunResult<PlotInputs> {
    if !dir.is_dir() {
        return Err(RunError::Input(format!("no such directory: {}", dir.display())));
    }
    let decay: Option<DecaySweep> = read_json(&dir.join("decay.json"))?;
    let stability: Option<StabilityReport> = read_json(&dir.join("stability.json"))?;
    let fields = dir.join("fields");
    let slices = match (
        read_field_if(&fields, "l_true")?,
        read_field_if(&fields, "l_rec")?,
        read_field_if(&fields, "sigma_rec")?,
    ) {
        (Some(l_true), Some(l_rec), Some(sigma_rec)) => Some(SliceFields {
            l_true,
            l_rec,
            sigma_rec,
        }),
        _ => None,
    };
    Ok(PlotInputs {
        decay,
        stability,
        slices,
    })
}
