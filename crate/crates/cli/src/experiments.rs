//! CGO checks, asymptotic sweeps, refinement and stability experiments.

use crate::config::{noise_at, DecayMedium, Pipeline, RunConfig};
use crate::pipeline::{
    forward_problem, identity_residual, reconstruct, region, synthesize_dataset, Check, Dataset, Reconstruction,
    RunResult,
};
use esmax_core::cgo::{
    assemble_cgo, canonical_eta0, canonical_zeta0, faddeev_norm_estimate, loglog_slope, make_zeta_eta,
    maxwell_residual_modulated, remainder_asymptotics, solve_remainder, DecayReport, Medium,
};
use esmax_core::forward::{perturb_data, synthesize, CoefficientSpec, NoiseMode, NoiseSpec};
use esmax_core::norm::discrete_cm_norm;
use esmax_core::transport::{direction_diagnostic, exit_maps, transport_field_for_pair};
use esmax_core::vec3::{axis_rotation, cadd, cdot, cnorm, mat_mul, mat_vec, re, real_to_c, rnorm, rsub, RVec};
use esmax_core::{Mask, ScalarField, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Worst relative errors of the CGO parameter identities over random draws.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub draws: usize,
    /// `|ζ·ζ − k²|/|ζ|²`
    pub dispersion: f64,
    /// `|ζ·η|/(|ζ||η|)`
    pub orthogonality: f64,
    /// `|ζ₁ + ζ₂ − Q(a,0,0)|/|ζ|`
    pub pair_sum: f64,
    /// `|ζ₀·ζ₀|` and `|η₀·ζ₀|`
    pub limit_identities: f64,
}

pub fn parameter_invariants(k: f64, draws: usize, seed: u64) -> RunResult<InvariantCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = InvariantCheck {
        draws,
        dispersion: 0.0,
        orthogonality: 0.0,
        pair_sum: 0.0,
        limit_identities: 0.0,
    };
    let z0 = canonical_zeta0();
    let e0 = canonical_eta0();
    out.limit_identities = cdot(z0, z0).norm().max(cdot(e0, z0).norm());
    for _ in 0..draws {
        let h = rng.gen_range(0.02..0.5);
        let a = rng.gen_range(0.0..2.0);
        let angles: [f64; 3] = [0; 3].map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI));
        let q = mat_mul(
            &axis_rotation(2, angles[2]),
            &mat_mul(&axis_rotation(1, angles[1]), &axis_rotation(0, angles[0])),
        );
        let p1 = make_zeta_eta(h, a, k, &q, 1)?;
        let p2 = make_zeta_eta(h, a, k, &q, 2)?;
        for p in [&p1, &p2] {
            let zn = p.zeta_norm();
            out.dispersion = out.dispersion.max((cdot(p.zeta, p.zeta) - k * k).norm() / (zn * zn));
            out.orthogonality = out.orthogonality.max(cdot(p.zeta, p.eta).norm() / (zn * cnorm(p.eta)));
            let (z0, e0) = (p.zeta0(), p.eta0());
            out.limit_identities = out.limit_identities.max(cdot(z0, z0).norm()).max(cdot(e0, z0).norm());
        }
        let sum = cadd(p1.zeta, p2.zeta);
        let expect = real_to_c(mat_vec(&q, [a, 0.0, 0.0]));
        let diff = [0, 1, 2].map(|i| sum[i] - expect[i]);
        out.pair_sum = out.pair_sum.max(cnorm(diff) / p1.zeta_norm());
    }
    Ok(out)
}

/// CGO solve in the homogeneous medium.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrivialMediumCheck {
    pub h: f64,
    pub max_remainder: f64,
    pub r_curlcurl: f64,
    pub r_div: f64,
}

pub fn trivial_medium(cfg: &RunConfig) -> RunResult<TrivialMediumCheck> {
    let domain = cfg.domain()?;
    let g = *domain.grid();
    let medium = Medium::new(&ScalarField::constant(g, C64::new(1.0, 0.0)))?;
    let k = cfg.coefficients.wavenumber();
    let [p, _] = cfg.pair(cfg.cgo.h)?;
    let rem = solve_remainder(&p, &medium, domain.inside(), &cfg.cgo.solver)?;
    let e = assemble_cgo(&p, &rem, domain.inside())?;
    let res = maxwell_residual_modulated(p.zeta, &e.envelope, &medium.n_field(), k, domain.inside());
    Ok(TrivialMediumCheck {
        h: cfg.cgo.h,
        max_remainder: rem
            .r
            .components()
            .iter()
            .flatten()
            .map(|z| z.norm())
            .fold(0.0, f64::max),
        r_curlcurl: res.r_curlcurl,
        r_div: res.r_div,
    })
}

/// `‖G_ζ‖` estimated on band-limited probes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenNormRow {
    pub zeta_norm: f64,
    pub norm: f64,
}

pub fn green_norms(cfg: &RunConfig) -> RunResult<Vec<GreenNormRow>> {
    let g = cfg.grid()?;
    let k = cfg.coefficients.wavenumber();
    cfg.decay
        .zeta_norms
        .iter()
        .map(|&z| {
            // |ζ|² = 2/h² − k² for a = 0
            let h = (2.0 / (z * z + k * k)).sqrt();
            let p = make_zeta_eta(h, 0.0, k, &cfg.cgo.frames[0], 1)?;
            Ok(GreenNormRow {
                zeta_norm: p.zeta_norm(),
                norm: faddeev_norm_estimate(&p, &g, cfg.decay.probes, cfg.seed.0, &cfg.cgo.solver),
            })
        })
        .collect()
}

/// Ratios `‖G‖(|ζ|)/‖G‖(|ζ'|)` scaled by `|ζ|/|ζ'|`, ideally 1.
pub fn green_ratios(rows: &[GreenNormRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| (w[0].norm / w[1].norm) / (w[1].zeta_norm / w[0].zeta_norm))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CgoCheckReport {
    pub invariants: InvariantCheck,
    pub trivial: TrivialMediumCheck,
    pub green: Vec<GreenNormRow>,
    pub green_ratios: Vec<f64>,
    pub checks: Vec<Check>,
}

pub fn cgo_check(cfg: &RunConfig) -> RunResult<CgoCheckReport> {
    cfg.validate()?;
    let t = &cfg.tolerances;
    let invariants = parameter_invariants(cfg.coefficients.wavenumber(), 20, cfg.seed.0)?;
    let trivial = trivial_medium(cfg)?;
    let green = green_norms(cfg)?;
    let ratios = green_ratios(&green);
    let mut checks = vec![
        Check::at_most("dispersion", invariants.dispersion, 1e-12),
        Check::at_most("orthogonality", invariants.orthogonality, 1e-12),
        Check::at_most("pair_sum", invariants.pair_sum, 1e-12),
        Check::at_most("limit_identities", invariants.limit_identities, 1e-12),
        Check::at_most("trivial_remainder", trivial.max_remainder, 0.0),
        Check::at_most("trivial_r_curlcurl", trivial.r_curlcurl, t.trivial),
    ];
    for (i, r) in ratios.iter().enumerate() {
        checks.push(Check::at_most(
            format!("green_ratio_{i}"),
            (r - 1.0).abs(),
            t.green_ratio,
        ));
    }
    Ok(CgoCheckReport {
        invariants,
        trivial,
        green,
        green_ratios: ratios,
        checks,
    })
}

/// `‖β − L²ζ₀‖` at one `h`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionRow {
    pub h: f64,
    pub zeta_norm: f64,
    pub sup: f64,
    pub c1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySweep {
    pub remainder: DecayReport,
    /// `‖(η₁+R₁)·(η₂+R₂) − 1‖_∞` strictly decreasing in `1/h`.
    pub product_monotone: bool,
    pub direction: Vec<DirectionRow>,
    /// Least-squares slope of `log‖β − L²ζ₀‖_∞` against `log h`.
    pub direction_slope: Option<f64>,
    pub direction_monotone: bool,
    pub checks: Vec<Check>,
}

fn decreasing_in_inverse_h(h: &[f64], v: &[f64]) -> bool {
    let mut pairs: Vec<(f64, f64)> = h.iter().copied().zip(v.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.windows(2).all(|w| w[1].1 < w[0].1)
}

pub fn direction_rows(cfg: &RunConfig) -> RunResult<Vec<DirectionRow>> {
    let domain = cfg.domain()?;
    cfg.decay
        .h
        .iter()
        .map(|&h| {
            let problem = forward_problem(cfg, &domain, cfg.pair(h)?.to_vec())?;
            let out = problem.solve()?;
            let tf = transport_field_for_pair(&out.measurements, 0, 1, cfg.transport.convention)?;
            let d = direction_diagnostic(&tf, &problem.coefficients.l, tf.direction_ref, domain.inside())?;
            Ok(DirectionRow {
                h,
                zeta_norm: out.measurements.params[0].zeta_norm(),
                sup: d[0].value,
                c1: d[1].value,
            })
        })
        .collect()
}

pub fn decay_sweep(cfg: &RunConfig) -> RunResult<DecaySweep> {
    cfg.validate()?;
    let domain = cfg.domain()?;
    let spec = match cfg.decay.medium {
        DecayMedium::DielectricBump => CoefficientSpec {
            omega: cfg.coefficients.omega,
            epsilon0: cfg.coefficients.epsilon0,
            mu0: cfg.coefficients.mu0,
            ..CoefficientSpec::dielectric_bump()
        },
        DecayMedium::Configured => cfg.coefficients.clone(),
    };
    let c = synthesize(&spec, domain.grid())?;
    let (n, k) = esmax_core::forward::refractive_index(&c)?;
    let medium = Medium::new(&n)?;
    let remainder = remainder_asymptotics(
        &cfg.decay.h,
        cfg.cgo.a,
        k,
        &cfg.cgo.frames[0],
        &medium,
        domain.inside(),
        &cfg.cgo.solver,
    )?;
    let hs: Vec<f64> = remainder.rows.iter().map(|r| r.h).collect();
    let defects: Vec<f64> = remainder.rows.iter().map(|r| r.product_defect).collect();
    let product_monotone = decreasing_in_inverse_h(&hs, &defects);
    let direction = direction_rows(cfg)?;
    let dh: Vec<f64> = direction.iter().map(|r| r.h).collect();
    let ds: Vec<f64> = direction.iter().map(|r| r.sup).collect();
    let direction_slope = loglog_slope(&dh, &ds);
    let direction_monotone = decreasing_in_inverse_h(&dh, &ds);
    let t = &cfg.tolerances;
    let slope = remainder.leading_slope.unwrap_or(f64::NAN);
    let checks = vec![
        Check::at_most(
            "remainder_slope_deviation",
            (slope - t.remainder_slope).abs(),
            t.remainder_slope_window,
        ),
        Check::flag("product_defect_monotone", product_monotone),
        Check::at_least(
            "direction_slope",
            direction_slope.unwrap_or(f64::NAN),
            t.direction_slope_min,
        ),
        Check::flag("direction_monotone", direction_monotone),
    ];
    Ok(DecaySweep {
        remainder,
        product_monotone,
        direction,
        direction_slope,
        direction_monotone,
        checks,
    })
}

/// Transport identity residual with the true `L` on a sequence of grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub n: usize,
    pub identity_residual: f64,
}

pub fn identity_refinement(cfg: &RunConfig, grids: &[usize]) -> RunResult<Vec<RefinementRow>> {
    grids
        .iter()
        .map(|&n| {
            let mut c = cfg.clone();
            c.grid.n = n;
            c.pipeline = Pipeline::Transport2;
            let ds = synthesize_dataset(&c)?;
            Ok(RefinementRow {
                n,
                identity_residual: identity_residual(&c, &ds)?,
            })
        })
        .collect()
}

/// One perturbation amplitude of a stability experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub amplitude: f64,
    /// `max_j ‖D_j − D̃_j‖` (data order).
    pub delta_in: f64,
    /// `‖L_rec − L̃_rec‖` (L order) on the region.
    pub delta_l: f64,
    /// `‖σ_rec − σ̃_rec‖` (σ order) on the recovery mask.
    pub delta_sigma: f64,
    pub ratio_l: f64,
    pub ratio_sigma: f64,
    /// `‖Re β − Re β̃‖_∞` on Ω (transport-2).
    pub delta_beta: Option<f64>,
    /// `max(|x₊ − x̃₊| + |t₊ − t̃₊|)` over the exit seeds (transport-2).
    pub delta_exit: Option<f64>,
    pub ratio_exit: Option<f64>,
    /// `‖Γ − Γ̃‖_∞` on Ω (matrix-6).
    pub delta_gamma: Option<f64>,
    pub ratio_gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub pipeline: Pipeline,
    pub mode: NoiseMode,
    pub data_order: usize,
    pub l_order: usize,
    pub sigma_order: usize,
    /// Sorted by `delta_in`.
    pub rows: Vec<StabilityRow>,
    /// Largest ratio of each kind: the fitted Lipschitz constants.
    pub lipschitz_l: f64,
    pub lipschitz_sigma: f64,
    /// max/min ratio over the rows with `delta_in > 0`.
    pub spread_l: f64,
    pub spread_sigma: f64,
    pub spread_exit: Option<f64>,
    pub spread_gamma: Option<f64>,
    /// `delta_l` nondecreasing in `delta_in`.
    pub monotone: bool,
    pub checks: Vec<Check>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let hi = v.iter().copied().fold(0.0, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_empty() {
        1.0
    } else {
        hi / lo
    }
}

fn diff(a: &ScalarField, b: &ScalarField) -> ScalarField {
    a.zip_map(b, |x, y| x - y).expect("same grid")
}

fn exit_seeds(mask: &Mask, count: usize) -> Vec<RVec> {
    let idx = mask.indices();
    let stride = (idx.len() / count).max(1);
    idx.iter().step_by(stride).map(|&i| mask.grid().point(i)).collect()
}

/// Reruns the reconstruction on perturbed data for each amplitude.
pub fn stability_experiment(cfg: &RunConfig, deltas: &[f64]) -> RunResult<StabilityReport> {
    let ds = synthesize_dataset(cfg)?;
    let base = reconstruct(cfg, &ds.domain, ds.measurements())?;
    stability_on(cfg, &ds, &base, deltas)
}

/// As [`stability_experiment`] with an existing dataset and baseline.
pub fn stability_on(
    cfg: &RunConfig,
    ds: &Dataset,
    base: &Reconstruction,
    deltas: &[f64],
) -> RunResult<StabilityReport> {
    let s = &cfg.stability;
    let data_mask = region(cfg.pipeline, &ds.domain);
    let seeds = exit_seeds(ds.domain.omega1(), s.exit_seeds);
    let base_exits = match (&base.transport, cfg.pipeline) {
        (Some(t), Pipeline::Transport2) => Some(exit_maps(
            &base.transport_fields[0],
            &ds.domain,
            &seeds,
            t.step,
            &cfg.transport.trace,
        )?),
        _ => None,
    };
    let mut rows = Vec::new();
    for &delta in deltas {
        let noise = NoiseSpec {
            norm_order: s.data_order,
            ..noise_at(&cfg.noise, delta, cfg.seed.0)
        };
        let p = perturb_data(&ds.problem, ds.measurements(), &noise, data_mask)?;
        let rec = if delta == 0.0 {
            base.clone()
        } else {
            reconstruct(cfg, &ds.domain, &p.measurements)?
        };
        let delta_l = discrete_cm_norm(&diff(&rec.l_rec, &base.l_rec), s.l_order, &base.region)?.value;
        let delta_sigma = discrete_cm_norm(
            &diff(&rec.sigma_rec, &base.sigma_rec),
            s.sigma_order,
            &base.recovery_mask,
        )?
        .value;
        let mut row = StabilityRow {
            amplitude: delta,
            delta_in: p.data_norm,
            delta_l,
            delta_sigma,
            ratio_l: ratio(delta_l, p.data_norm),
            ratio_sigma: ratio(delta_sigma, p.data_norm),
            delta_beta: None,
            delta_exit: None,
            ratio_exit: None,
            delta_gamma: None,
            ratio_gamma: None,
        };
        if let (Some(be), Some(t)) = (&base_exits, &base.transport) {
            let (a, b) = (&base.transport_fields[0].beta, &rec.transport_fields[0].beta);
            let db = ds
                .domain
                .inside()
                .indices()
                .into_iter()
                .map(|i| rnorm(rsub(re(a.at(i)), re(b.at(i)))))
                .fold(0.0, f64::max);
            let pe = exit_maps(
                &rec.transport_fields[0],
                &ds.domain,
                &seeds,
                t.step,
                &cfg.transport.trace,
            )?;
            let de = be
                .iter()
                .zip(&pe)
                .map(|((x, t), (y, u))| rnorm(rsub(*x, *y)) + (t - u).abs())
                .fold(0.0, f64::max);
            row.delta_beta = Some(db);
            row.delta_exit = Some(de);
            row.ratio_exit = Some(ratio(de, db));
        }
        if let (Some(g0), Some(g1)) = (&base.gamma, &rec.gamma) {
            let dg = ds
                .domain
                .inside()
                .indices()
                .into_iter()
                .map(|i| cnorm([0, 1, 2].map(|c| g0.at(i)[c] - g1.at(i)[c])))
                .fold(0.0, f64::max);
            row.delta_gamma = Some(dg);
            row.ratio_gamma = Some(ratio(dg, p.data_norm));
        }
        rows.push(row);
    }
    rows.sort_by(|a, b| a.delta_in.total_cmp(&b.delta_in));
    let live: Vec<&StabilityRow> = rows.iter().filter(|r| r.delta_in > 0.0).collect();
    let spread_l = spread(live.iter().map(|r| r.ratio_l));
    let spread_sigma = spread(live.iter().map(|r| r.ratio_sigma));
    let spread_exit = base_exits
        .as_ref()
        .map(|_| spread(live.iter().filter_map(|r| r.ratio_exit)));
    let spread_gamma = base
        .gamma
        .as_ref()
        .map(|_| spread(live.iter().filter_map(|r| r.ratio_gamma)));
    let monotone = rows.windows(2).all(|w| w[1].delta_l >= w[0].delta_l);
    let lim = cfg.tolerances.stability_spread;
    let finite = rows.iter().all(|r| r.ratio_l.is_finite() && r.ratio_sigma.is_finite());
    let mut checks = vec![
        Check::flag("ratios_finite", finite),
        Check::at_most("spread_l", spread_l, lim),
    ];
    if let Some(e) = spread_exit {
        checks.push(Check::at_most("spread_exit", e, lim));
    }
    if let Some(g) = spread_gamma {
        checks.push(Check::at_most("spread_gamma", g, lim));
    }
    Ok(StabilityReport {
        pipeline: cfg.pipeline,
        mode: cfg.noise.mode,
        data_order: s.data_order,
        l_order: s.l_order,
        sigma_order: s.sigma_order,
        lipschitz_l: rows.iter().map(|r| r.ratio_l).fold(0.0, f64::max),
        lipschitz_sigma: rows.iter().map(|r| r.ratio_sigma).fold(0.0, f64::max),
        rows,
        spread_l,
        spread_sigma,
        spread_exit,
        spread_gamma,
        monotone,
        checks,
    })
}
