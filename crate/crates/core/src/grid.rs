//! Uniform periodic grid on `[−L/2, L/2)³` and complex fields sampled on it.
//!
//! Node `(i, j, k)` sits at `x = −L/2 + (i, j, k)·Δ` and is stored at flat index
//! `i + N·(j + N·k)` (x fastest).

use crate::error::{Error, Result};
use crate::vec3::CVec;
pub use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    box_side: f64,
}

impl Grid {
    pub const MIN_N: usize = 16;

    pub fn new(n: usize, box_side: f64) -> Result<Self> {
        if n < Self::MIN_N {
            return Err(Error::Grid(format!("N = {n} is below {}", Self::MIN_N)));
        }
        if !(box_side.is_finite() && box_side > 0.0) {
            return Err(Error::Grid(format!("box side {box_side} is not positive")));
        }
        Ok(Grid { n, box_side })
    }

    /// `N` nodes per axis on the default `[−π, π)³` box.
    pub fn periodic(n: usize) -> Result<Self> {
        Self::new(n, 2.0 * std::f64::consts::PI)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn box_side(&self) -> f64 {
        self.box_side
    }

    pub fn spacing(&self) -> f64 {
        self.box_side / self.n as f64
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.box_side + i as f64 * self.spacing()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    /// Flat index of `(i, j, k)` taken modulo `N` on each axis.
    pub fn wrapped_index(&self, i: isize, j: isize, k: isize) -> usize {
        let n = self.n as isize;
        self.index(
            i.rem_euclid(n) as usize,
            j.rem_euclid(n) as usize,
            k.rem_euclid(n) as usize,
        )
    }

    pub fn ijk(&self, flat: usize) -> [usize; 3] {
        [flat % self.n, (flat / self.n) % self.n, flat / (self.n * self.n)]
    }

    pub fn point(&self, flat: usize) -> [f64; 3] {
        let [i, j, k] = self.ijk(flat);
        [self.coord(i), self.coord(j), self.coord(k)]
    }

    /// Angular wavenumber of DFT bin `m` (signed frequency times `2π/L`).
    pub fn wavenumber(&self, m: usize) -> f64 {
        let n = self.n as isize;
        let m = m as isize;
        let signed = if m < (n + 1) / 2 { m } else { m - n };
        signed as f64 * 2.0 * std::f64::consts::PI / self.box_side
    }

    pub fn signed_frequency(&self, m: usize) -> i64 {
        let n = self.n as i64;
        let m = m as i64;
        if m < (n + 1) / 2 {
            m
        } else {
            m - n
        }
    }

    /// Continuous grid coordinate of a physical point (node `i` at `i`).
    pub fn to_grid_units(&self, x: f64) -> f64 {
        (x + 0.5 * self.box_side) / self.spacing()
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self.n == other.n && self.box_side == other.box_side
    }
}

fn check_same(a: &Grid, b: &Grid) -> Result<()> {
    if a.same_as(b) {
        Ok(())
    } else {
        Err(Error::Field("fields live on different grids".into()))
    }
}

/// Complex scalar samples on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<C64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            grid,
            values: vec![C64::new(0.0, 0.0); grid.node_count()],
        }
    }

    pub fn constant(grid: Grid, c: C64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.node_count()],
        }
    }

    pub fn from_values(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Field(format!(
                "expected {} samples, got {}",
                grid.node_count(),
                values.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> C64 + Sync,
    {
        let values = (0..grid.node_count())
            .into_par_iter()
            .map(|i| f(grid.point(i)))
            .collect();
        ScalarField { grid, values }
    }

    pub fn from_real_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> f64 + Sync,
    {
        Self::from_fn(grid, |x| C64::new(f(x), 0.0))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn map<F>(&self, f: F) -> Self
    where
        F: Fn(C64) -> C64 + Sync,
    {
        ScalarField {
            grid: self.grid,
            values: self.values.par_iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map<F>(&self, other: &ScalarField, f: F) -> Result<Self>
    where
        F: Fn(C64, C64) -> C64 + Sync,
    {
        check_same(&self.grid, &other.grid)?;
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .par_iter()
                .zip(other.values.par_iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// `max |f|` over the nodes of `mask` (0 for an empty mask).
    pub fn max_abs_on(&self, mask: &Mask) -> f64 {
        mask.indices()
            .iter()
            .map(|&i| self.values[i].norm())
            .fold(0.0, f64::max)
    }
}

/// Complex 3-vector samples on a [`Grid`], stored component-major.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    comps: [Vec<C64>; 3],
}

impl VectorField {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.node_count()];
        VectorField {
            grid,
            comps: [z.clone(), z.clone(), z],
        }
    }

    pub fn from_components(grid: Grid, comps: [Vec<C64>; 3]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.node_count()) {
            return Err(Error::Field(format!(
                "expected {} samples per component",
                grid.node_count()
            )));
        }
        Ok(VectorField { grid, comps })
    }

    pub fn from_scalars(fields: [ScalarField; 3]) -> Result<Self> {
        let grid = *fields[0].grid();
        for f in &fields[1..] {
            check_same(&grid, f.grid())?;
        }
        let [a, b, c] = fields;
        Ok(VectorField {
            grid,
            comps: [a.into_values(), b.into_values(), c.into_values()],
        })
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> CVec + Sync,
    {
        let nodes: Vec<CVec> = (0..grid.node_count())
            .into_par_iter()
            .map(|i| f(grid.point(i)))
            .collect();
        Self::from_nodes(grid, &nodes)
    }

    /// Builds a field from per-node vectors.
    pub fn from_nodes(grid: Grid, nodes: &[CVec]) -> Self {
        let comps = [0, 1, 2].map(|c| nodes.par_iter().map(|v| v[c]).collect());
        VectorField { grid, comps }
    }

    /// Applies `f(flat index, value)` node by node.
    pub fn map_nodes<F>(&self, f: F) -> Self
    where
        F: Fn(usize, CVec) -> CVec + Sync,
    {
        let nodes: Vec<CVec> = (0..self.grid.node_count())
            .into_par_iter()
            .map(|i| f(i, self.at(i)))
            .collect();
        Self::from_nodes(self.grid, &nodes)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, c: usize) -> &[C64] {
        &self.comps[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.comps[c]
    }

    pub fn components(&self) -> &[Vec<C64>; 3] {
        &self.comps
    }

    pub fn into_components(self) -> [Vec<C64>; 3] {
        self.comps
    }

    pub fn at(&self, i: usize) -> CVec {
        [self.comps[0][i], self.comps[1][i], self.comps[2][i]]
    }

    pub fn set(&mut self, i: usize, v: CVec) {
        for (c, comp) in self.comps.iter_mut().enumerate() {
            comp[i] = v[c];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.comps
            .iter()
            .all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite()))
    }

    /// `max |F|` (Euclidean norm per node) over `mask`.
    pub fn max_norm_on(&self, mask: &Mask) -> f64 {
        mask.indices()
            .iter()
            .map(|&i| crate::vec3::cnorm(self.at(i)))
            .fold(0.0, f64::max)
    }

    /// Multiplies every node by the scalar field `s`.
    pub fn scale_by(&self, s: &ScalarField) -> Result<Self> {
        check_same(&self.grid, s.grid())?;
        let sv = s.values();
        let comps = [0, 1, 2].map(|c| {
            self.comps[c]
                .par_iter()
                .zip(sv.par_iter())
                .map(|(&a, &b)| a * b)
                .collect()
        });
        Ok(VectorField { grid: self.grid, comps })
    }
}

/// A field with one or three components, as stored in field files.
#[derive(Clone, Debug, PartialEq)]
pub enum Field {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl Field {
    pub fn grid(&self) -> &Grid {
        match self {
            Field::Scalar(f) => f.grid(),
            Field::Vector(f) => f.grid(),
        }
    }

    pub fn component_count(&self) -> usize {
        match self {
            Field::Scalar(_) => 1,
            Field::Vector(_) => 3,
        }
    }

    pub fn component_slices(&self) -> Vec<&[C64]> {
        match self {
            Field::Scalar(f) => vec![f.values()],
            Field::Vector(f) => f.components().iter().map(|c| c.as_slice()).collect(),
        }
    }
}

impl From<ScalarField> for Field {
    fn from(f: ScalarField) -> Self {
        Field::Scalar(f)
    }
}

impl From<VectorField> for Field {
    fn from(f: VectorField) -> Self {
        Field::Vector(f)
    }
}

/// Boolean node selection on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    grid: Grid,
    bits: Vec<bool>,
}

impl Mask {
    pub fn from_bits(grid: Grid, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != grid.node_count() {
            return Err(Error::Field("mask size does not match grid".into()));
        }
        Ok(Mask { grid, bits })
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([f64; 3]) -> bool + Sync,
    {
        let bits = (0..grid.node_count())
            .into_par_iter()
            .map(|i| f(grid.point(i)))
            .collect();
        Mask { grid, bits }
    }

    pub fn full(grid: Grid) -> Self {
        Mask {
            grid,
            bits: vec![true; grid.node_count()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Mask {
            grid: self.grid,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && b).collect(),
        }
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Keeps nodes whose whole `(2r+1)³` neighbourhood lies in the mask.
    pub fn erode(&self, r: usize) -> Mask {
        self.box_filter(r, true)
    }

    /// Keeps nodes whose whole taxicab ball of radius `r` (6-connected, `r`
    /// steps) lies in the mask. Cells beyond the box edge count as outside.
    pub fn erode_taxicab(&self, r: usize) -> Mask {
        let g = self.grid;
        let n = g.n() as isize;
        let mut bits = self.bits.clone();
        for _ in 0..r {
            let src = bits.clone();
            bits = (0..g.node_count())
                .into_par_iter()
                .map(|f| {
                    if !src[f] {
                        return false;
                    }
                    let ijk = g.ijk(f).map(|v| v as isize);
                    (0..3).all(|axis| {
                        [-1, 1].iter().all(|o| {
                            let mut p = ijk;
                            p[axis] += o;
                            (0..n).contains(&p[axis]) && src[g.wrapped_index(p[0], p[1], p[2])]
                        })
                    })
                })
                .collect();
        }
        Mask { grid: g, bits }
    }

    /// Adds every node within Chebyshev distance `r` of the mask.
    pub fn dilate(&self, r: usize) -> Mask {
        self.box_filter(r, false)
    }

    fn box_filter(&self, r: usize, erode: bool) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let g = self.grid;
        let n = g.n() as isize;
        let r = r as isize;
        let mut bits = self.bits.clone();
        for axis in 0..3 {
            let src = bits.clone();
            bits = (0..g.node_count())
                .into_par_iter()
                .map(|f| {
                    let ijk = g.ijk(f).map(|v| v as isize);
                    let mut acc = erode;
                    for o in -r..=r {
                        let mut p = ijk;
                        p[axis] += o;
                        if p[axis] < 0 || p[axis] >= n {
                            if erode {
                                acc = false;
                            }
                            continue;
                        }
                        let b = src[g.wrapped_index(p[0], p[1], p[2])];
                        if erode {
                            acc &= b;
                        } else {
                            acc |= b;
                        }
                    }
                    acc
                })
                .collect();
        }
        Mask { grid: g, bits }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_round_trips() {
        let g = Grid::periodic(16).unwrap();
        for flat in [0, 1, 17, 255, 4095] {
            let [i, j, k] = g.ijk(flat);
            assert_eq!(g.index(i, j, k), flat);
        }
        assert_eq!(g.wrapped_index(-1, 16, 0), g.index(15, 0, 0));
        assert_eq!(g.point(0), [-std::f64::consts::PI; 3]);
    }

    #[test]
    fn wavenumbers_are_signed_integers_on_default_box() {
        let g = Grid::periodic(16).unwrap();
        assert_eq!(g.wavenumber(0), 0.0);
        assert!((g.wavenumber(3) - 3.0).abs() < 1e-14);
        assert!((g.wavenumber(15) + 1.0).abs() < 1e-14);
        assert!((g.wavenumber(8) + 8.0).abs() < 1e-14);
        assert_eq!(g.signed_frequency(8), -8);
    }

    #[test]
    fn rejects_small_or_bad_grids() {
        assert!(Grid::new(8, 1.0).is_err());
        assert!(Grid::new(32, 0.0).is_err());
        assert!(Grid::new(32, f64::NAN).is_err());
    }

    #[test]
    fn erosion_and_dilation() {
        let g = Grid::periodic(16).unwrap();
        let ball = Mask::from_fn(g, |x| x[0] * x[0] + x[1] * x[1] + x[2] * x[2] < 1.5 * 1.5);
        let e = ball.erode(1);
        assert!(e.is_subset_of(&ball));
        assert!(e.count() < ball.count());
        let d = ball.dilate(1);
        assert!(ball.is_subset_of(&d));
        assert_eq!(ball.erode(0), ball);
        let t = ball.erode_taxicab(2);
        assert!(ball.erode(2).is_subset_of(&t));
        assert!(t.is_subset_of(&ball.erode_taxicab(1)));
        let full = Mask::full(g);
        let one = full.erode_taxicab(1);
        assert_eq!(one.count(), 14 * 14 * 14);
    }
}
