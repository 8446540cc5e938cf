use clap::{Parser, Subcommand};
use esmax::commands::{execute, Command};
use esmax::config::{Pipeline, RunConfig, Seed};
use esmax::manifest::{Manifest, RunEntry};
use esmax::pipeline::{entry, RunError};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "esmax", version, about = "Reconstruct L and σ from internal Maxwell data")]
struct Cli {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Grid points per axis.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Comma-separated semiclassical parameters. decay-sweep uses the whole
    /// list; other commands take a single value as `cgo.h`.
    #[arg(long, global = true, value_delimiter = ',')]
    h: Option<Vec<f64>>,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Parameter identities, trivial medium, Green-operator decay.
    CgoCheck,
    /// Synthesize coefficients, CGO solutions and internal data.
    Forward,
    Reconstruct {
        #[arg(long)]
        pipeline: Option<Pipeline>,
        /// Measurement directory written by `forward`; synthesized if absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Recover n and σ given L.
    RecoverSigma {
        /// A `reconstruct` output directory; the true L is used if absent.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Noise sweep with Lipschitz ratios.
    Stability {
        #[arg(long)]
        pipeline: Option<Pipeline>,
    },
    /// CGO remainder and direction decay in h.
    DecaySweep,
    /// CSV plot data from earlier outputs.
    ExportPlots {
        /// Directory holding decay.json, stability.json and fields/.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn configure(cli: &Cli) -> Result<(RunConfig, Command), RunError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = Seed(s);
    }
    if let Some(n) = cli.grid {
        cfg.grid.n = n;
    }
    let is_sweep = matches!(cli.command, Sub::DecaySweep);
    if let Some(h) = &cli.h {
        if is_sweep {
            cfg.decay.h = h.clone();
        } else if let [one] = h.as_slice() {
            cfg.cgo.h = *one;
        } else {
            return Err(RunError::Input("--h takes a single value outside decay-sweep".into()));
        }
    }
    let cmd = match &cli.command {
        Sub::CgoCheck => Command::CgoCheck,
        Sub::Forward => Command::Forward,
        Sub::Reconstruct { pipeline, data } => {
            if let Some(p) = pipeline {
                cfg.pipeline = *p;
            }
            Command::Reconstruct { data: data.clone() }
        }
        Sub::RecoverSigma { from } => Command::RecoverSigma { from: from.clone() },
        Sub::Stability { pipeline } => {
            if let Some(p) = pipeline {
                cfg.pipeline = *p;
            }
            Command::Stability
        }
        Sub::DecaySweep => Command::DecaySweep,
        Sub::ExportPlots { from } => Command::ExportPlots { from: from.clone() },
    };
    cfg.validate()?;
    Ok((cfg, cmd))
}

fn init_threads() -> Result<(), RunError> {
    let Ok(v) = std::env::var("ESMAX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| RunError::Input(format!("ESMAX_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RunError::Input(e.to_string()))
}

fn run(cli: &Cli) -> Result<i32, RunError> {
    init_threads()?;
    let (cfg, cmd) = configure(cli)?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out)?;
    let start = Instant::now();
    let outcome = execute(&cmd, &cfg, &out)?;
    let config_path = out.join("config.toml");
    std::fs::write(&config_path, cfg.to_toml()?)?;
    let code = if outcome.passed() { 0 } else { 2 };
    for c in &outcome.checks {
        let mark = if c.passed { "ok  " } else { "FAIL" };
        eprintln!("{mark} {}: {:.3e} {} {:.3e}", c.name, c.value, c.relation, c.limit);
    }
    let mut files = outcome.files;
    files.push(entry(&out, &config_path, "config"));
    Manifest::append(
        &out,
        RunEntry {
            command: cmd.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed.0.to_string(),
            config: "config.toml".into(),
            threads: rayon::current_num_threads(),
            files,
            checks: outcome.checks,
            exit_code: code,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
