//! Convex reconstruction domain Ω, its boundary sampling and the Ω₁ restriction.

use crate::error::{Error, Result};
use crate::grid::{Grid, Mask};
use crate::vec3::{orthogonal_unit, radd, rcross, rdot, rnorm, rnormalize, rscale, rsub, RVec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Ball { center: RVec, radius: f64 },
    Ellipsoid { center: RVec, semi_axes: RVec },
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec::Ball {
            center: [0.0; 3],
            radius: 0.8,
        }
    }
}

impl ShapeSpec {
    pub fn center(&self) -> RVec {
        match self {
            ShapeSpec::Ball { center, .. } | ShapeSpec::Ellipsoid { center, .. } => *center,
        }
    }

    pub fn semi_axes(&self) -> RVec {
        match self {
            ShapeSpec::Ball { radius, .. } => [*radius; 3],
            ShapeSpec::Ellipsoid { semi_axes, .. } => *semi_axes,
        }
    }

    pub fn is_ball(&self) -> bool {
        matches!(self, ShapeSpec::Ball { .. }) || {
            let a = self.semi_axes();
            a[0] == a[1] && a[1] == a[2]
        }
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.semi_axes().into_iter().fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        2.0 * self.max_semi_axis()
    }

    fn scaled(&self, x: RVec) -> RVec {
        let c = self.center();
        let a = self.semi_axes();
        [(x[0] - c[0]) / a[0], (x[1] - c[1]) / a[1], (x[2] - c[2]) / a[2]]
    }

    /// Level set `φ = |A⁻¹(x − c)| − 1`: negative inside, zero on ∂Ω.
    pub fn level(&self, x: RVec) -> f64 {
        rnorm(self.scaled(x)) - 1.0
    }

    pub fn contains(&self, x: RVec) -> bool {
        self.level(x) < 0.0
    }

    /// Outward unit normal at (or near) `x`.
    pub fn normal(&self, x: RVec) -> RVec {
        let u = self.scaled(x);
        let a = self.semi_axes();
        rnormalize([u[0] / a[0], u[1] / a[1], u[2] / a[2]])
    }

    /// Boundary point in direction `u` (unit) from the centre.
    pub fn boundary_along(&self, u: RVec) -> RVec {
        let a = self.semi_axes();
        let s = 1.0 / rnorm([u[0] / a[0], u[1] / a[1], u[2] / a[2]]);
        radd(self.center(), rscale(s, u))
    }

    /// Largest `t ≥ 0` with `x + t·d` on ∂Ω, for `x` inside and any direction `d ≠ 0`.
    pub fn ray_exit(&self, x: RVec, d: RVec) -> f64 {
        let a = self.semi_axes();
        let p = self.scaled(x);
        let q = [d[0] / a[0], d[1] / a[1], d[2] / a[2]];
        let qa = rdot(q, q);
        let qb = rdot(p, q);
        let qc = rdot(p, p) - 1.0;
        (-qb + (qb * qb - qa * qc).max(0.0).sqrt()) / qa
    }

    fn surface_area(&self) -> f64 {
        let [a, b, c] = self.semi_axes();
        let p = 1.6075;
        let m = ((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0;
        4.0 * std::f64::consts::PI * m.powf(1.0 / p)
    }

    fn validate(&self) -> Result<()> {
        let a = self.semi_axes();
        if a.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::DegenerateShape(format!("semi-axes {a:?}")));
        }
        if self.center().iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateShape("non-finite centre".into()));
        }
        Ok(())
    }
}

/// A boundary point with its outward normal and an orthonormal tangent pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: RVec,
    pub normal: RVec,
    pub tangents: [RVec; 2],
}

#[derive(Clone, Debug)]
pub struct Domain {
    shape: ShapeSpec,
    grid: Grid,
    reference_direction: RVec,
    r_cut: f64,
    boundary: Vec<BoundarySample>,
    tangent_curve: Vec<RVec>,
    inside: Mask,
    omega1: Mask,
}

/// Cells of clearance required between Ω̄ and the box faces.
pub const BOX_MARGIN_CELLS: usize = 4;

const TANGENT_CURVE_SAMPLES: usize = 4096;

/// Builds Ω with boundary samples spaced about one grid cell apart and the Ω₁
/// mask that drops nodes within `r_cut` of the points where the boundary
/// normal is orthogonal to `reference_direction`.
pub fn build_domain(shape: &ShapeSpec, grid: &Grid, reference_direction: RVec, r_cut: f64) -> Result<Domain> {
    shape.validate()?;
    if !(r_cut.is_finite() && r_cut >= 0.0) {
        return Err(Error::DegenerateShape(format!("r_cut {r_cut}")));
    }
    if rnorm(reference_direction) == 0.0 || !rnorm(reference_direction).is_finite() {
        return Err(Error::DegenerateShape("zero reference direction".into()));
    }
    let half = 0.5 * grid.box_side();
    let margin = BOX_MARGIN_CELLS as f64 * grid.spacing();
    let c = shape.center();
    let a = shape.semi_axes();
    // the last node sits at half − Δ, so the upper face is tighter
    let fits = (0..3).all(|i| c[i] - a[i] >= -half + margin && c[i] + a[i] <= half - grid.spacing() - margin);
    if !fits {
        return Err(Error::ShapeOutsideBox {
            margin_cells: BOX_MARGIN_CELLS,
        });
    }
    let d = rnormalize(reference_direction);
    let boundary = sample_boundary(shape, grid.spacing());
    let tangent_curve = tangent_curve(shape, d);
    let inside = Mask::from_fn(*grid, |x| shape.contains(x));
    let omega1 = Mask::from_fn(*grid, |x| {
        shape.contains(x) && distance_to_curve(shape, d, &tangent_curve, x) > r_cut
    });
    Ok(Domain {
        shape: shape.clone(),
        grid: *grid,
        reference_direction: d,
        r_cut,
        boundary,
        tangent_curve,
        inside,
        omega1,
    })
}

fn sample_boundary(shape: &ShapeSpec, spacing: f64) -> Vec<BoundarySample> {
    let count = ((shape.surface_area() / (spacing * spacing)).ceil() as usize).max(32);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let a = shape.semi_axes();
    (0..count)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * k as f64;
            let u = [r * th.cos(), r * th.sin(), z];
            let point = radd(shape.center(), [a[0] * u[0], a[1] * u[1], a[2] * u[2]]);
            let normal = shape.normal(point);
            let t1 = orthogonal_unit(normal);
            let t2 = rcross(normal, t1);
            BoundarySample {
                point,
                normal,
                tangents: [t1, t2],
            }
        })
        .collect()
}

/// Points of ∂Ω whose normal is orthogonal to `d`: the ellipse cut by the plane
/// through the centre with normal `A⁻²d`.
fn tangent_curve(shape: &ShapeSpec, d: RVec) -> Vec<RVec> {
    let a = shape.semi_axes();
    let m = rnormalize([d[0] / (a[0] * a[0]), d[1] / (a[1] * a[1]), d[2] / (a[2] * a[2])]);
    let u = orthogonal_unit(m);
    let v = rcross(m, u);
    (0..TANGENT_CURVE_SAMPLES)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / TANGENT_CURVE_SAMPLES as f64;
            let dir = radd(rscale(t.cos(), u), rscale(t.sin(), v));
            shape.boundary_along(dir)
        })
        .collect()
}

fn distance_to_curve(shape: &ShapeSpec, d: RVec, curve: &[RVec], x: RVec) -> f64 {
    if let ShapeSpec::Ball { center, radius } = shape {
        let p = rsub(x, *center);
        let z = rdot(p, d);
        let rho = rnorm(rsub(p, rscale(z, d)));
        return ((rho - radius).powi(2) + z * z).sqrt();
    }
    curve.iter().map(|&c| rnorm(rsub(x, c))).fold(f64::INFINITY, f64::min)
}

impl Domain {
    pub fn shape(&self) -> &ShapeSpec {
        &self.shape
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn reference_direction(&self) -> RVec {
        self.reference_direction
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    pub fn boundary_samples(&self) -> &[BoundarySample] {
        &self.boundary
    }

    /// Sampled tangent-point set `T`.
    pub fn tangent_points(&self) -> &[RVec] {
        &self.tangent_curve
    }

    /// Grid nodes inside Ω.
    pub fn inside(&self) -> &Mask {
        &self.inside
    }

    /// Grid nodes of Ω₁.
    pub fn omega1(&self) -> &Mask {
        &self.omega1
    }

    pub fn contains(&self, x: RVec) -> bool {
        self.shape.contains(x)
    }

    pub fn level(&self, x: RVec) -> f64 {
        self.shape.level(x)
    }

    pub fn diameter(&self) -> f64 {
        self.shape.diameter()
    }

    /// Same shape and grid with another reference direction and cut radius.
    pub fn with_reference(&self, reference_direction: RVec, r_cut: f64) -> Result<Domain> {
        build_domain(&self.shape, &self.grid, reference_direction, r_cut)
    }

    /// Mean spacing of the boundary samples.
    pub fn boundary_spacing(&self) -> f64 {
        (self.shape.surface_area() / self.boundary.len() as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::periodic(32).unwrap()
    }

    #[test]
    fn ball_tangent_set_is_equator() {
        let ball = ShapeSpec::Ball {
            center: [0.0; 3],
            radius: 0.8,
        };
        let d = build_domain(&ball, &grid(), [0.0, 0.0, 1.0], 0.2).unwrap();
        for p in d.tangent_points() {
            assert!(p[2].abs() < 1e-12);
            assert!((rnorm(*p) - 0.8).abs() < 1e-12);
        }
        assert!(d.omega1().is_subset_of(d.inside()));
        assert!(d.omega1().count() < d.inside().count());
        // a node near the equator is cut, the centre is kept
        let g = grid();
        let centre = g.index(16, 16, 16);
        assert!(d.omega1().contains(centre));
    }

    #[test]
    fn zero_cut_keeps_all_of_omega() {
        let d = build_domain(&ShapeSpec::default(), &grid(), [0.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(d.omega1(), d.inside());
    }

    #[test]
    fn normals_are_unit_and_outward() {
        let e = ShapeSpec::Ellipsoid {
            center: [0.1, 0.0, -0.1],
            semi_axes: [0.8, 0.7, 0.6],
        };
        let d = build_domain(&e, &grid(), [0.0, 0.0, 1.0], 0.1).unwrap();
        for s in d.boundary_samples() {
            assert!((rnorm(s.normal) - 1.0).abs() < 1e-12);
            assert!(e.level(s.point).abs() < 1e-12);
            assert!(e.level(radd(s.point, rscale(1e-3, s.normal))) > 0.0);
            assert!(rdot(s.normal, s.tangents[0]).abs() < 1e-12);
            assert!(rdot(s.normal, s.tangents[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn errors() {
        let big = ShapeSpec::Ball {
            center: [0.0; 3],
            radius: 3.0,
        };
        assert!(matches!(
            build_domain(&big, &grid(), [0.0, 0.0, 1.0], 0.0),
            Err(Error::ShapeOutsideBox { .. })
        ));
        let flat = ShapeSpec::Ball {
            center: [0.0; 3],
            radius: 0.0,
        };
        assert!(matches!(
            build_domain(&flat, &grid(), [0.0, 0.0, 1.0], 0.0),
            Err(Error::DegenerateShape(_))
        ));
    }

    #[test]
    fn ray_exit_on_ball() {
        let b = ShapeSpec::default();
        let t = b.ray_exit([0.0, 0.0, 0.4], [0.0, 0.0, 1.0]);
        assert!((t - 0.4).abs() < 1e-14);
        let t = b.ray_exit([0.0, 0.0, 0.4], [0.0, 0.0, -2.0]);
        assert!((t - 0.6).abs() < 1e-14);
    }
}
