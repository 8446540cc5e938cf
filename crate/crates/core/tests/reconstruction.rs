use esmax_core::cgo::{identity_frame, make_zeta_eta, SolverConfig};
use esmax_core::domain::{build_domain, BoundarySample, Domain, ShapeSpec};
use esmax_core::forward::*;
use esmax_core::interp::{Interpolant, Kernel};
use esmax_core::matrix::*;
use esmax_core::recovery::*;
use esmax_core::transport::*;
use esmax_core::vec3::{cnorm, radd, rdot, real_to_c, rnorm, rscale, CVec, RVec};
use esmax_core::{Grid, Mask, ScalarField, VectorField, C64};
use proptest::prelude::*;

const R: f64 = 0.8;

fn ball(n: usize) -> Domain {
    let g = Grid::periodic(n).unwrap();
    build_domain(&ShapeSpec::default(), &g, [0.0, 0.0, 1.0], 0.16).unwrap()
}

/// Boundary mobility whose least-squares value at every sample is `l(x)`.
fn mobility_from_fn(d: &Domain, l: impl Fn(RVec) -> f64) -> BoundaryMobility {
    let s: &[BoundarySample] = d.boundary_samples();
    let g: Vec<CVec> = s.iter().map(|b| real_to_c(b.tangents[0])).collect();
    let td: Vec<CVec> = s.iter().map(|b| real_to_c(rscale(l(b.point), b.tangents[0]))).collect();
    boundary_mobility_from(s, &[&g], &[&td], d, 1e-12).unwrap()
}

fn constant_transport(g: Grid, beta: RVec, gamma: f64) -> TransportField {
    TransportField {
        beta: VectorField::from_fn(g, |_| real_to_c(beta)),
        gamma: ScalarField::constant(g, C64::new(gamma, 0.0)),
        chi: ScalarField::constant(g, C64::new(1.0, 0.0)),
        direction_ref: real_to_c(beta),
        convention: Convention::DerivedIdentity,
    }
}

fn max_diff_on(a: &ScalarField, b: &ScalarField, m: &Mask) -> f64 {
    m.indices()
        .into_iter()
        .map(|i| (a.values()[i] - b.values()[i]).norm())
        .fold(0.0, f64::max)
}

fn dataset(n: usize, h: f64, spec: CoefficientSpec) -> (Domain, ForwardProblem, ForwardOutput) {
    let d = ball(n);
    let c = synthesize(&spec, d.grid()).unwrap();
    let k = spec.wavenumber();
    let params = vec![
        make_zeta_eta(h, 0.0, k, &identity_frame(), 1).unwrap(),
        make_zeta_eta(h, 0.0, k, &identity_frame(), 2).unwrap(),
    ];
    let fp = ForwardProblem {
        domain: d.clone(),
        coefficients: c,
        params,
        solver: SolverConfig::default(),
    };
    let out = fp.solve().unwrap();
    (d, fp, out)
}

#[test]
fn constant_flow_matches_ball_exit_formula() {
    // β ≡ e₃, γ ≡ c, L₀ ≡ 1: forward exit gives e^{+c t₊}, backward e^{−c t₋}
    let d = ball(32);
    let g = *d.grid();
    let c = 0.7;
    let tf = constant_transport(g, [0.0, 0.0, 1.0], c);
    let bm = mobility_from_fn(&d, |_| 1.0);
    let sol = solve_transport(&tf, &bm, &d, d.inside(), &TraceConfig::default()).unwrap();
    assert_eq!(sol.failures, 0);
    for i in d.inside().indices() {
        let x = g.point(i);
        let cap = (R * R - x[0] * x[0] - x[1] * x[1]).sqrt();
        let (tp, tm) = (cap - x[2], cap + x[2]);
        let expect = if tp <= tm { (c * tp).exp() } else { (-c * tm).exp() };
        assert!((sol.l_rec.values()[i].re - expect).abs() <= 1e-6 * expect, "{x:?}");
        assert!((sol.exit_time.values()[i].re - tp.min(tm)).abs() <= 1e-6);
    }
}

#[test]
fn constant_flow_reproduces_consistent_solution() {
    let d = ball(32);
    let g = *d.grid();
    let c = 0.5;
    let truth = |x: RVec| (-c * x[2]).exp() * (1.0 + 0.2 * x[0]);
    let tf = constant_transport(g, [0.0, 0.0, 1.0], c);
    let bm = mobility_from_fn(&d, truth);
    let sol = solve_transport(&tf, &bm, &d, d.inside(), &TraceConfig::default()).unwrap();
    for i in d.inside().indices() {
        let x = g.point(i);
        assert!((sol.l_rec.values()[i].re - truth(x)).abs() <= 1e-3 * truth(x));
    }
}

fn random_data(g: Grid, modes: &[(i32, i32, i32, f64, f64, usize)], zeta: CVec) -> Modulated {
    Modulated {
        zeta,
        envelope: VectorField::from_fn(g, |x| {
            let mut v = [C64::new(0.0, 0.0); 3];
            for &(a, b, c, re, im, comp) in modes {
                let ph = a as f64 * x[0] + b as f64 * x[1] + c as f64 * x[2];
                v[comp] += C64::new(re, im) * C64::new(0.0, ph).exp();
            }
            v
        }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn derived_coefficients_are_antisymmetric(
        m1 in proptest::collection::vec((-2i32..=2, -2i32..=2, -2i32..=2, -1.0f64..1.0, -1.0f64..1.0, 0usize..3), 1..4),
        m2 in proptest::collection::vec((-2i32..=2, -2i32..=2, -2i32..=2, -1.0f64..1.0, -1.0f64..1.0, 0usize..3), 1..4),
        h in 0.1f64..0.5,
    ) {
        let g = Grid::periodic(16).unwrap();
        let p1 = make_zeta_eta(h, 0.0, 1.0, &identity_frame(), 1).unwrap();
        let p2 = make_zeta_eta(h, 0.0, 1.0, &identity_frame(), 2).unwrap();
        let chi = chi_weight(&p1, &p2, &g).unwrap();
        let d1 = random_data(g, &m1, p1.zeta);
        let d2 = random_data(g, &m2, p2.zeta);
        let same = assemble_vector_field(&d1, &d1, &chi, Convention::DerivedIdentity, p1.zeta0()).unwrap();
        prop_assert!(same.beta.components().iter().flatten().all(|z| z.norm() == 0.0));
        prop_assert!(same.gamma.values().iter().all(|z| z.norm() == 0.0));
        let fwd = assemble_vector_field(&d1, &d2, &chi, Convention::DerivedIdentity, p1.zeta0()).unwrap();
        let rev = assemble_vector_field(&d2, &d1, &chi, Convention::DerivedIdentity, p1.zeta0()).unwrap();
        for i in 0..g.node_count() {
            let (a, b) = (fwd.beta.at(i), rev.beta.at(i));
            for c in 0..3 {
                prop_assert!((a[c] + b[c]).norm() <= 1e-12 * (1.0 + a[c].norm()));
            }
            let (ga, gb) = (fwd.gamma.values()[i], rev.gamma.values()[i]);
            prop_assert!((ga + gb).norm() <= 1e-12 * (1.0 + ga.norm()));
        }
    }
}

#[test]
fn real_rescaling_of_chi_leaves_mobility_unchanged() {
    let (d, _, out) = dataset(32, 0.1, CoefficientSpec::default());
    let ms = &out.measurements;
    let chi = chi_weight(&ms.params[0], &ms.params[1], &ms.grid).unwrap();
    let bm = boundary_mobility(ms, &d, 1e-12).unwrap();
    let cfg = TraceConfig::default();
    let solve = |s: f64| {
        let chi_s = chi.map(|z| z * s);
        let tf = assemble_vector_field(
            &ms.d[0],
            &ms.d[1],
            &chi_s,
            Convention::DerivedIdentity,
            ms.params[0].zeta0(),
        )
        .unwrap();
        solve_transport(&tf, &bm, &d, d.omega1(), &cfg).unwrap().l_rec
    };
    let base = solve(1.0);
    let top = base.max_abs_on(d.omega1());
    for s in [-1.0, 2.0, -0.5] {
        assert!(
            max_diff_on(&solve(s), &base, d.omega1()) <= 1e-9 * top,
            "χ scaled by {s}"
        );
    }
}

#[test]
fn boundary_mobility_matches_ground_truth() {
    let (d, fp, out) = dataset(32, 0.1, CoefficientSpec::default());
    let bm = boundary_mobility(&out.measurements, &d, 1e-12).unwrap();
    assert_eq!(bm.unusable_count(), 0);
    let li = Interpolant::new(*d.grid(), &fp.coefficients.l.real_parts(), Kernel::CubicBSpline);
    for (s, v) in bm.samples().iter().zip(bm.values()) {
        let truth = li.eval(s.point);
        assert!((v.unwrap() - truth).abs() <= 1e-3 * truth);
    }
}

#[test]
fn zero_trace_sample_is_unusable() {
    let d = ball(24);
    let s = d.boundary_samples();
    let mut g: Vec<CVec> = s.iter().map(|b| real_to_c(b.tangents[0])).collect();
    g[3] = [C64::new(0.0, 0.0); 3];
    let td = g.iter().map(|v| v.map(|c| c * 3.0)).collect::<Vec<_>>();
    let bm = boundary_mobility_from(s, &[&g], &[&td], &d, 1e-12).unwrap();
    assert_eq!(bm.unusable_count(), 1);
    assert!(bm.values()[3].is_none());
    assert!(bm.values().iter().flatten().all(|v| (v - 3.0).abs() < 1e-14));
}

fn gamma_field(g: Grid, f: impl Fn(RVec) -> RVec + Sync) -> GammaField {
    GammaField {
        gamma: VectorField::from_fn(g, |x| real_to_c(f(x))),
        condition: ScalarField::constant(g, C64::new(1.0, 0.0)),
        failed: 0,
        region_nodes: g.node_count(),
        max_condition: 1.0,
        imag_residual: 0.0,
    }
}

/// Start of the chord that reaches `x` travelling along `u` inside the ball.
fn chord_start(x: RVec, u: RVec) -> RVec {
    let b = rdot(x, u);
    let t = b + (b * b - rdot(x, x) + R * R).sqrt();
    radd(x, rscale(-t, u))
}

#[test]
fn line_integral_of_log_gradient() {
    // Γ = −∇log L for L = e^{x₃}, chords along e₃
    let d = ball(64);
    let g = *d.grid();
    let truth = |x: RVec| x[2].exp();
    let bm = mobility_from_fn(&d, truth);
    let gf = gamma_field(g, |_| [0.0, 0.0, -1.0]);
    let cfg = LineIntegralConfig::default();
    let u = [0.0, 0.0, 1.0];
    let l = integrate_log_mobility(&gf, &bm, &d, d.inside(), PathChoice::Direction(u), &cfg).unwrap();
    for i in d.inside().indices() {
        let x = g.point(i);
        let xb = chord_start(x, u);
        let expect = bm.eval(xb).unwrap() * (x[2] - xb[2]).exp();
        assert!((l.values()[i].re - expect).abs() <= 1e-6 * expect);
        assert!((l.values()[i].re - truth(x)).abs() <= 1e-3 * truth(x));
    }
    let flat = integrate_log_mobility(
        &gamma_field(g, |_| [0.0; 3]),
        &bm,
        &d,
        d.inside(),
        PathChoice::FarSide,
        &cfg,
    )
    .unwrap();
    for i in d.inside().indices() {
        let x = g.point(i);
        let r = rnorm(x);
        let xb = if r > 1e-12 { rscale(-R / r, x) } else { [0.0, 0.0, -R] };
        assert!((flat.values()[i].re - bm.eval(xb).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn oblique_chords_integrate_varying_gradient() {
    let d = ball(64);
    let g = *d.grid();
    let log_l = |x: RVec| 0.5 * x[0].sin() + x[2];
    let bm = mobility_from_fn(&d, |x| log_l(x).exp());
    let gf = gamma_field(g, |x| [-0.5 * x[0].cos(), 0.0, -1.0]);
    let u = [1.0 / 3f64.sqrt(); 3];
    let l = integrate_log_mobility(
        &gf,
        &bm,
        &d,
        d.inside(),
        PathChoice::Direction(u),
        &LineIntegralConfig::default(),
    )
    .unwrap();
    for i in d.inside().indices() {
        let x = g.point(i);
        let xb = chord_start(x, u);
        let expect = bm.eval(xb).unwrap() * (log_l(x) - log_l(xb)).exp();
        // cubic interpolation of a varying Γ: O(Δ⁴) per unit length
        assert!((l.values()[i].re - expect).abs() <= 1e-5 * expect, "{x:?}");
    }
}

#[test]
fn trivial_medium_round_trip() {
    let (d, fp, out) = dataset(32, 0.1, CoefficientSpec::trivial());
    let ms = &out.measurements;
    let tf = transport_field_for_pair(ms, 0, 1, Convention::DerivedIdentity).unwrap();
    let bm = boundary_mobility(ms, &d, 1e-12).unwrap();
    let sol = solve_transport(&tf, &bm, &d, d.inside(), &TraceConfig::default()).unwrap();
    assert!(max_diff_on(&sol.l_rec, &fp.coefficients.l, d.inside()) <= 1e-6);
    let cfg = RecoveryConfig::default();
    let e = recover_e(&ms.d, &sol.l_rec, d.inside(), cfg.l_floor).unwrap();
    let m = recovery_mask(d.inside(), &cfg);
    assert!(m.count() > 0);
    let n = recover_n(&e, out.k, &m, &cfg).unwrap();
    assert!(max_diff_on(&n.n, &out.n, &m) <= 1e-6);
    let (sigma, _) = recover_sigma(&n.n, fp.coefficients.omega, fp.coefficients.epsilon0);
    assert!(max_diff_on(&sigma, &fp.coefficients.sigma, &m) <= 1e-6);
}

#[test]
fn recovered_field_obeys_quotient_bound() {
    let (d, fp, out) = dataset(32, 0.1, CoefficientSpec::default());
    let ms = &out.measurements;
    let tf = transport_field_for_pair(ms, 0, 1, Convention::DerivedIdentity).unwrap();
    let bm = boundary_mobility(ms, &d, 1e-12).unwrap();
    let sol = solve_transport(&tf, &bm, &d, d.omega1(), &TraceConfig::default()).unwrap();
    let m = d.omega1();
    let l_err = max_diff_on(&sol.l_rec, &fp.coefficients.l, m);
    let l_min = m
        .indices()
        .iter()
        .map(|&i| fp.coefficients.l.values()[i].re)
        .fold(f64::INFINITY, f64::min);
    let rec = recover_e(&ms.d, &sol.l_rec, m, 0.1).unwrap();
    let exact = recover_e(&ms.d, &fp.coefficients.l, m, 0.1).unwrap();
    for (a, b) in rec.iter().zip(&exact) {
        for i in m.indices() {
            let (ea, eb) = (a.envelope.at(i), b.envelope.at(i));
            let diff = cnorm([ea[0] - eb[0], ea[1] - eb[1], ea[2] - eb[2]]);
            assert!(diff <= cnorm(eb) * l_err / (l_min - l_err) * (1.0 + 1e-9));
        }
    }
}

#[test]
fn smooth_noise_has_requested_size() {
    let (d, fp, out) = dataset(24, 0.2, CoefficientSpec::default());
    for delta in [1e-4, 1e-3, 1e-2] {
        let noise = NoiseSpec {
            amplitude: delta,
            seed: 11,
            ..NoiseSpec::default()
        };
        let p = perturb_data(&fp, &out.measurements, &noise, d.inside()).unwrap();
        assert!(
            p.data_norm >= 0.5 * delta && p.data_norm <= 2.0 * delta,
            "{delta}: {}",
            p.data_norm
        );
        let again = perturb_data(&fp, &out.measurements, &noise, d.inside()).unwrap();
        for (a, b) in p.measurements.d.iter().zip(&again.measurements.d) {
            assert_eq!(a.envelope, b.envelope);
        }
    }
    let none = perturb_data(&fp, &out.measurements, &NoiseSpec::default(), d.inside()).unwrap();
    assert_eq!(none.data_norm, 0.0);
}

#[test]
fn measurements_round_trip_through_disk() {
    let (_, _, out) = dataset(24, 0.2, CoefficientSpec::default());
    let dir = tempfile::tempdir().unwrap();
    write_measurements(dir.path(), &out.measurements).unwrap();
    let back = read_measurements(dir.path()).unwrap();
    let ms = &out.measurements;
    assert_eq!(back.len(), ms.len());
    assert_eq!(back.params, ms.params);
    for (a, b) in back.d.iter().zip(&ms.d) {
        for i in 0..ms.grid.node_count() {
            let (x, y) = (a.envelope.at(i), b.envelope.at(i));
            for c in 0..3 {
                assert!((x[c] - y[c]).norm() <= 1e-12 * (1.0 + y[c].norm()));
            }
        }
    }
    for (a, b) in back.g.iter().zip(&ms.g) {
        assert_eq!(a, b);
    }
}

#[test]
fn tangential_trace_geometry() {
    let (d, _, out) = dataset(32, 0.2, CoefficientSpec::default());
    let ms = &out.measurements;
    for (f, gj) in out.fields.iter().zip(&ms.g) {
        let m = Modulated {
            zeta: f.params.zeta,
            envelope: f.envelope.clone(),
        };
        let sampler = m.sampler(Kernel::CubicBSpline);
        for (s, t) in d.boundary_samples().iter().zip(gj).step_by(37) {
            let e = sampler.at(s.point);
            let en = cnorm(e);
            let along: C64 = (0..3).map(|c| e[c] * s.normal[c]).sum();
            let sin_part = (en * en - along.norm_sqr()).max(0.0).sqrt();
            assert!((cnorm(*t) - sin_part).abs() <= 0.1 * en);
            // ν × E is tangential
            let dot: C64 = (0..3).map(|c| t[c] * s.normal[c]).sum();
            assert!(dot.norm() <= 1e-9 * en);
        }
    }
}
