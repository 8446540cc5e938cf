//! Small fixed-size vector helpers for real and complex 3-vectors.

use num_complex::Complex64 as C64;

pub type RVec = [f64; 3];
pub type CVec = [C64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
pub const CZERO: CVec = [C64 { re: 0.0, im: 0.0 }; 3];

pub fn rdot(a: RVec, b: RVec) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn rnorm(a: RVec) -> f64 {
    rdot(a, a).sqrt()
}

pub fn radd(a: RVec, b: RVec) -> RVec {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn rsub(a: RVec, b: RVec) -> RVec {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn rscale(s: f64, a: RVec) -> RVec {
    [s * a[0], s * a[1], s * a[2]]
}

pub fn rcross(a: RVec, b: RVec) -> RVec {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn rnormalize(a: RVec) -> RVec {
    let n = rnorm(a);
    rscale(1.0 / n, a)
}

/// Bilinear product `Σ aᵢbᵢ` (no conjugation).
pub fn cdot(a: CVec, b: CVec) -> C64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Sesquilinear product `Σ aᵢ conj(bᵢ)`.
pub fn cdot_conj(a: CVec, b: CVec) -> C64 {
    a[0] * b[0].conj() + a[1] * b[1].conj() + a[2] * b[2].conj()
}

pub fn cnorm(a: CVec) -> f64 {
    (a[0].norm_sqr() + a[1].norm_sqr() + a[2].norm_sqr()).sqrt()
}

pub fn cadd(a: CVec, b: CVec) -> CVec {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn csub(a: CVec, b: CVec) -> CVec {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn cscale(s: C64, a: CVec) -> CVec {
    [s * a[0], s * a[1], s * a[2]]
}

pub fn ccross(a: CVec, b: CVec) -> CVec {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn real_to_c(a: RVec) -> CVec {
    [a[0].into(), a[1].into(), a[2].into()]
}

pub fn re(a: CVec) -> RVec {
    [a[0].re, a[1].re, a[2].re]
}

pub fn im(a: CVec) -> RVec {
    [a[0].im, a[1].im, a[2].im]
}

/// `ν × v` for a real normal and a complex vector.
pub fn rc_cross(n: RVec, v: CVec) -> CVec {
    ccross(real_to_c(n), v)
}

/// `Σ aᵢ xᵢ` with complex `a` and real `x`.
pub fn c_dot_r(a: CVec, x: RVec) -> C64 {
    a[0] * x[0] + a[1] * x[1] + a[2] * x[2]
}

pub fn mat_vec(m: &Mat3, v: RVec) -> RVec {
    [rdot(m[0], v), rdot(m[1], v), rdot(m[2], v)]
}

pub fn mat_cvec(m: &Mat3, v: CVec) -> CVec {
    let row = |r: [f64; 3]| v[0] * r[0] + v[1] * r[1] + v[2] * r[2];
    [row(m[0]), row(m[1]), row(m[2])]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = m[j][i];
        }
    }
    out
}

pub fn det(m: &Mat3) -> f64 {
    rdot(m[0], rcross(m[1], m[2]))
}

/// Rotation by `angle` radians about the coordinate axis `axis`.
pub fn axis_rotation(axis: usize, angle: f64) -> Mat3 {
    let (s, c) = angle.sin_cos();
    match axis {
        0 => [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        1 => [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        _ => [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
    }
}

/// Checks that `m` is a proper rotation to the given tolerance.
pub fn is_rotation(m: &Mat3, tol: f64) -> bool {
    let mtm = mat_mul(&transpose(m), m);
    let orth = (0..3).all(|i| (0..3).all(|j| (mtm[i][j] - IDENTITY[i][j]).abs() <= tol));
    orth && (det(m) - 1.0).abs() <= tol
}

/// Unit vector orthogonal to `n`, built from the coordinate axis least aligned with it.
pub fn orthogonal_unit(n: RVec) -> RVec {
    let a = n.map(f64::abs);
    let axis = if a[0] <= a[1] && a[0] <= a[2] {
        [1.0, 0.0, 0.0]
    } else if a[1] <= a[2] {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    rnormalize(rcross(n, axis))
}

/// Orthonormal tangent pair `(t₁, n×t₁)` for a unit normal `n`.
pub fn cross_frame(n: RVec) -> (RVec, RVec) {
    let t = orthogonal_unit(n);
    (t, rcross(n, t))
}
