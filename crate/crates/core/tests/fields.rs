use esmax_core::domain::{build_domain, ShapeSpec};
use esmax_core::fourier::{apply_fourier_multiplier, SpectralBasis};
use esmax_core::norm::discrete_cm_norm;
use esmax_core::stencil::laplacian;
use esmax_core::vec3::rdot;
use esmax_core::{Grid, Mask, ScalarField, C64};
use proptest::prelude::*;

fn low_mode_field(grid: Grid, coeffs: &[(i32, i32, i32, f64, f64)]) -> ScalarField {
    ScalarField::from_fn(grid, |x| {
        coeffs
            .iter()
            .map(|&(a, b, c, re, im)| {
                let ph = a as f64 * x[0] + b as f64 * x[1] + c as f64 * x[2];
                C64::new(re, im) * C64::new(0.0, ph).exp()
            })
            .sum()
    })
}

#[test]
fn fd_laplacian_agrees_with_spectral_oracle() {
    // the spectral Laplacian is exact for a single lattice mode
    let mut errs = Vec::new();
    for n in [16, 32] {
        let g = Grid::periodic(n).unwrap();
        let f = low_mode_field(g, &[(1, 2, 0, 1.0, 0.0)]);
        let basis = SpectralBasis::new(g, [0.0; 3]);
        let spec = basis.laplacian(&basis.to_spectrum(f.values()));
        for (s, v) in spec.iter().zip(f.values()) {
            assert!((s + 5.0 * v).norm() < 1e-10);
        }
        let fd = laplacian(&f);
        let err = fd
            .values()
            .iter()
            .zip(&spec)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        errs.push(err);
    }
    let order = (errs[0] / errs[1]).log2();
    assert!(order > 3.8, "observed order {order}");
}

#[test]
fn gaussian_c2_norm_matches_analytic_derivatives() {
    let g = Grid::periodic(64).unwrap();
    let s = 0.1;
    let f = ScalarField::from_real_fn(g, |x| (-rdot(x, x) / s).exp());
    let ball = Mask::from_fn(g, |x| rdot(x, x) < 0.64);
    let measured = discrete_cm_norm(&f, 2, &ball).unwrap().value;
    // analytic sup over the node sets the norm uses for each order
    let mut oracle: f64 = 0.0;
    for k in 0..=2 {
        for i in ball.erode(2 * k).indices() {
            let x = g.point(i);
            let e = (-rdot(x, x) / s).exp();
            let vals: Vec<f64> = match k {
                0 => vec![e],
                1 => (0..3).map(|a| 2.0 * x[a] / s * e).collect(),
                _ => {
                    let mut v = Vec::new();
                    for a in 0..3 {
                        for b in a..3 {
                            let d = if a == b { 2.0 / s } else { 0.0 };
                            v.push((4.0 * x[a] * x[b] / (s * s) - d) * e);
                        }
                    }
                    v
                }
            };
            oracle = vals.iter().fold(oracle, |m, v| m.max(v.abs()));
        }
    }
    assert!((measured - oracle).abs() <= 0.02 * oracle, "{measured} vs {oracle}");
}

#[test]
fn ellipsoid_tangent_set_by_boundary_scan() {
    let g = Grid::periodic(48).unwrap();
    let shape = ShapeSpec::Ellipsoid {
        center: [0.0; 3],
        semi_axes: [0.8, 0.7, 0.6],
    };
    let d = build_domain(&shape, &g, [0.0, 0.0, 1.0], 0.1).unwrap();
    let pts = d.tangent_points();
    assert!(!pts.is_empty());
    for &p in pts {
        assert!(shape.level(p).abs() < 1e-9);
        assert!(rdot(shape.normal(p), [0.0, 0.0, 1.0]).abs() < 1e-6);
        assert!(p[2].abs() < 1e-6);
    }
    // brute-force scan of the equator: every point where n·e₃ vanishes is near the reported set
    for t in 0..360 {
        let th = (t as f64).to_radians();
        let q = [0.8 * th.cos(), 0.7 * th.sin(), 0.0];
        assert!(rdot(shape.normal(q), [0.0, 0.0, 1.0]).abs() < 1e-6);
        let dist = pts
            .iter()
            .map(|p| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(dist < 0.01, "equator point {q:?} missing ({dist})");
    }
    // and no node of Ω₁ lies within r_cut of them
    for i in d.omega1().indices() {
        let x = g.point(i);
        let rho_gap = pts
            .iter()
            .map(|p| ((p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2) + (p[2] - x[2]).powi(2)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(rho_gap > 0.1 - 0.005);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn omega1_shrinks_as_cut_grows(r1 in 0.0f64..0.3, dr in 0.0f64..0.3) {
        let g = Grid::periodic(24).unwrap();
        let d = build_domain(&ShapeSpec::default(), &g, [0.0, 0.0, 1.0], r1).unwrap();
        let d2 = d.with_reference([0.0, 0.0, 1.0], r1 + dr).unwrap();
        prop_assert!(d2.omega1().is_subset_of(d.omega1()));
        prop_assert!(d.omega1().is_subset_of(d.inside()));
    }

    #[test]
    fn cm_norm_is_a_seminorm(
        a in proptest::collection::vec((-2i32..=2, -2i32..=2, -2i32..=2, -1.0f64..1.0, -1.0f64..1.0), 1..4),
        b in proptest::collection::vec((-2i32..=2, -2i32..=2, -2i32..=2, -1.0f64..1.0, -1.0f64..1.0), 1..4),
        cre in -3.0f64..3.0, cim in -3.0f64..3.0, m in 0usize..=2,
    ) {
        let g = Grid::periodic(16).unwrap();
        let mask = Mask::from_fn(g, |x| rdot(x, x) < 4.0);
        let f = low_mode_field(g, &a);
        let h = low_mode_field(g, &b);
        let c = C64::new(cre, cim);
        let nf = discrete_cm_norm(&f, m, &mask).unwrap().value;
        let nh = discrete_cm_norm(&h, m, &mask).unwrap().value;
        let ncf = discrete_cm_norm(&f.map(|v| c * v), m, &mask).unwrap().value;
        prop_assert!((ncf - c.norm() * nf).abs() <= 1e-10 * (1.0 + ncf));
        let sum = f.zip_map(&h, |x, y| x + y).unwrap();
        let ns = discrete_cm_norm(&sum, m, &mask).unwrap().value;
        prop_assert!(ns <= nf + nh + 1e-10);
    }

    #[test]
    fn multiplier_then_reciprocal_is_identity(
        a in proptest::collection::vec((-3i32..=3, -3i32..=3, -3i32..=3, -1.0f64..1.0, -1.0f64..1.0), 1..5),
        p in 0.1f64..2.0, q in -1.0f64..1.0,
    ) {
        let g = Grid::periodic(16).unwrap();
        let f = low_mode_field(g, &a);
        let s = move |k: [f64; 3]| C64::new(p + k[0] * k[0] + k[1] * k[1], q * k[2]);
        let once = apply_fourier_multiplier(&f, s, 1e-12);
        prop_assert!(once.regularized.is_empty());
        let back = apply_fourier_multiplier(&once.field, move |k| 1.0 / s(k), 1e-12);
        for (x, y) in back.field.values().iter().zip(f.values()) {
            prop_assert!((x - y).norm() < 1e-10);
        }
    }
}
