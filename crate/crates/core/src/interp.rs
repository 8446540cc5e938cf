//! Periodic interpolation of grid samples at arbitrary points: trilinear and
//! prefiltered cubic B-spline.

use crate::grid::{Grid, C64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Sample types the interpolators can combine.
pub trait Sample: Copy + Send + Sync + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
}

impl Sample for f64 {
    fn zero() -> Self {
        0.0
    }
}

impl Sample for C64 {
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Trilinear,
    #[default]
    CubicBSpline,
}

/// One interpolated scalar quantity on a grid.
#[derive(Clone, Debug)]
pub struct Interpolant<T: Sample> {
    grid: Grid,
    kernel: Kernel,
    coef: Vec<T>,
}

const POLE: f64 = -0.267_949_192_431_122_7; // √3 − 2

impl<T: Sample> Interpolant<T> {
    pub fn new(grid: Grid, values: &[T], kernel: Kernel) -> Self {
        assert_eq!(values.len(), grid.node_count());
        let coef = match kernel {
            Kernel::Trilinear => values.to_vec(),
            Kernel::CubicBSpline => prefilter(&grid, values),
        };
        Interpolant { grid, kernel, coef }
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn eval(&self, x: [f64; 3]) -> T {
        let g = &self.grid;
        let u = [0, 1, 2].map(|a| g.to_grid_units(x[a]));
        match self.kernel {
            Kernel::Trilinear => {
                let base = u.map(|v| v.floor());
                let t = [0, 1, 2].map(|a| u[a] - base[a]);
                let b = base.map(|v| v as isize);
                let mut acc = T::zero();
                for dz in 0..2 {
                    let wz = if dz == 0 { 1.0 - t[2] } else { t[2] };
                    for dy in 0..2 {
                        let wy = if dy == 0 { 1.0 - t[1] } else { t[1] };
                        for dx in 0..2 {
                            let wx = if dx == 0 { 1.0 - t[0] } else { t[0] };
                            let idx = g.wrapped_index(b[0] + dx, b[1] + dy, b[2] + dz);
                            acc = acc + self.coef[idx] * (wx * wy * wz);
                        }
                    }
                }
                acc
            }
            Kernel::CubicBSpline => {
                let base = u.map(|v| v.floor());
                let w = [0, 1, 2].map(|a| bspline_weights(u[a] - base[a]));
                let b = base.map(|v| v as isize - 1);
                let mut acc = T::zero();
                for (dz, &wz) in w[2].iter().enumerate() {
                    for (dy, &wy) in w[1].iter().enumerate() {
                        let wzy = wz * wy;
                        for (dx, &wx) in w[0].iter().enumerate() {
                            let idx = g.wrapped_index(b[0] + dx as isize, b[1] + dy as isize, b[2] + dz as isize);
                            acc = acc + self.coef[idx] * (wzy * wx);
                        }
                    }
                }
                acc
            }
        }
    }
}

fn bspline_weights(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (4.0 - 6.0 * t * t + 3.0 * t * t * t) / 6.0,
        (1.0 + 3.0 * t + 3.0 * t * t - 3.0 * t * t * t) / 6.0,
        t * t * t / 6.0,
    ]
}

/// Converts samples to periodic cubic B-spline coefficients, axis by axis.
fn prefilter<T: Sample>(grid: &Grid, values: &[T]) -> Vec<T> {
    let n = grid.n();
    let mut c = values.to_vec();
    for axis in 0..3 {
        let stride = [1usize, n, n * n][axis];
        let src = c.clone();
        let lines: Vec<(usize, Vec<T>)> = (0..n * n)
            .into_par_iter()
            .map(|l| {
                let base = match axis {
                    0 => l * n,
                    1 => (l % n) + (l / n) * n * n,
                    _ => l,
                };
                let line: Vec<T> = (0..n).map(|i| src[base + i * stride]).collect();
                (base, filter_line(&line))
            })
            .collect();
        for (base, line) in lines {
            for (i, v) in line.into_iter().enumerate() {
                c[base + i * stride] = v;
            }
        }
    }
    c
}

fn filter_line<T: Sample>(s: &[T]) -> Vec<T> {
    let n = s.len();
    let z = POLE;
    let gain = (1.0 - z) * (1.0 - 1.0 / z);
    // truncated periodic sums; |z|^40 ≈ 1e-23
    let horizon = n.min(40);
    let mut cp: Vec<T> = s.iter().map(|&v| v * gain).collect();
    let mut acc = cp[0];
    let mut zk = z;
    for k in 1..horizon {
        acc = acc + cp[n - k] * zk;
        zk *= z;
    }
    // exact periodic sums need the 1/(1 − z^N) factor when the horizon covers the line
    let wrap = if horizon == n {
        1.0 / (1.0 - z.powi(n as i32))
    } else {
        1.0
    };
    cp[0] = acc * wrap;
    for i in 1..n {
        cp[i] = cp[i] + cp[i - 1] * z;
    }
    // c⁻[N−1] = −z Σ_j z^j c⁺[(N−1+j) mod N]
    let mut acc = cp[n - 1];
    let mut zk = z;
    for &c in &cp[..horizon.min(n) - 1] {
        acc = acc + c * zk;
        zk *= z;
    }
    let mut out = vec![T::zero(); n];
    out[n - 1] = acc * (-z * wrap);
    for i in (0..n - 1).rev() {
        out[i] = (out[i + 1] - cp[i]) * z;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn samples(g: &Grid, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..g.node_count()).map(|i| f(g.point(i))).collect()
    }

    #[test]
    fn both_kernels_interpolate_nodes() {
        let g = Grid::periodic(16).unwrap();
        let v = samples(&g, |x| (x[0] + 0.3 * x[1]).sin() + x[2].cos());
        for kernel in [Kernel::Trilinear, Kernel::CubicBSpline] {
            let it = Interpolant::new(g, &v, kernel);
            for flat in [0usize, 77, 1234, 4095] {
                assert!((it.eval(g.point(flat)) - v[flat]).abs() < 1e-9, "{kernel:?}");
            }
        }
    }

    #[test]
    fn cubic_is_fourth_order() {
        let err = |n: usize| {
            let g = Grid::periodic(n).unwrap();
            let f = |x: [f64; 3]| (x[0] + 0.5 * x[1]).sin() * x[2].cos();
            let it = Interpolant::new(g, &samples(&g, f), Kernel::CubicBSpline);
            let mut e: f64 = 0.0;
            for k in 0..200 {
                let t = k as f64 * 0.0173;
                let x = [t.sin() * 1.3, (2.0 * t).cos() * 0.9, t - 1.7];
                e = e.max((it.eval(x) - f(x)).abs());
            }
            e
        };
        let order = (err(24) / err(48)).log2();
        assert!(order > 3.6, "order {order}");
    }

    #[test]
    fn trilinear_exact_for_affine() {
        let g = Grid::periodic(16).unwrap();
        let f = |x: [f64; 3]| 1.0 + 0.2 * x[0] - 0.1 * x[1] + 0.3 * x[2];
        let it = Interpolant::new(g, &samples(&g, f), Kernel::Trilinear);
        let x = [0.123, -0.456, 0.789];
        assert!((it.eval(x) - f(x)).abs() < 1e-13);
    }

    #[test]
    fn complex_samples() {
        let g = Grid::periodic(16).unwrap();
        let v: Vec<C64> = (0..g.node_count())
            .map(|i| C64::new(0.0, g.point(i)[0]).exp())
            .collect();
        let it = Interpolant::new(g, &v, Kernel::CubicBSpline);
        let x = [0.31, 0.0, 0.0];
        assert!((it.eval(x) - C64::new(0.0, 0.31).exp()).norm() < 1e-3);
    }
}
