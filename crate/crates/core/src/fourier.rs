//! 3-D FFTs on the periodic grid and Fourier multipliers.
//!
//! A multiplier may act on a quasi-periodic lattice `ξ + p`: the input is
//! demodulated by `e^{−ip·x}`, transformed, multiplied by `s(ξ + p)` and
//! remodulated. With `p = 0` this is the ordinary periodic multiplier.

use crate::grid::{Grid, ScalarField, C64};
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft3 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.forward);
    }

    /// Inverse transform including the `1/N³` normalisation.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inverse);
        let s = 1.0 / (self.n * self.n * self.n) as f64;
        data.par_iter_mut().for_each(|v| *v *= s);
    }

    fn transform(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let n2 = n * n;
        assert_eq!(data.len(), n2 * n, "buffer does not match the FFT size");
        // x lines are contiguous
        data.par_chunks_mut(n2).for_each(|slab| fft.process(slab));
        // y lines: transpose each z slab
        data.par_chunks_mut(n2).for_each(|slab| {
            let mut t = vec![C64::new(0.0, 0.0); n2];
            for j in 0..n {
                for i in 0..n {
                    t[j + n * i] = slab[i + n * j];
                }
            }
            fft.process(&mut t);
            for j in 0..n {
                for i in 0..n {
                    slab[i + n * j] = t[j + n * i];
                }
            }
        });
        // z lines: gather into line-major order, transform, scatter back
        let mut lines = vec![C64::new(0.0, 0.0); n2 * n];
        {
            let src: &[C64] = data;
            lines.par_chunks_mut(n).enumerate().for_each(|(l, line)| {
                for (k, v) in line.iter_mut().enumerate() {
                    *v = src[l + n2 * k];
                }
            });
        }
        lines.par_chunks_mut(n * n.min(64)).for_each(|c| fft.process(c));
        data.par_chunks_mut(n2).enumerate().for_each(|(k, slab)| {
            for (l, v) in slab.iter_mut().enumerate() {
                *v = lines[l * n + k];
            }
        });
    }
}

/// Separable phase `e^{ip·x}` on the grid nodes.
#[derive(Clone, Debug)]
pub struct LatticePhase {
    axes: [Vec<C64>; 3],
    trivial: bool,
}

impl LatticePhase {
    /// `shift` is measured in units of the fundamental wavenumber `2π/L`.
    pub fn new(grid: &Grid, shift: [f64; 3]) -> Self {
        let k0 = 2.0 * std::f64::consts::PI / grid.box_side();
        let axes = [0, 1, 2].map(|a| {
            (0..grid.n())
                .map(|i| C64::new(0.0, shift[a] * k0 * grid.coord(i)).exp())
                .collect()
        });
        LatticePhase {
            axes,
            trivial: shift == [0.0; 3],
        }
    }

    pub fn at(&self, ijk: [usize; 3]) -> C64 {
        self.axes[0][ijk[0]] * self.axes[1][ijk[1]] * self.axes[2][ijk[2]]
    }

    pub fn is_trivial(&self) -> bool {
        self.trivial
    }

    /// Multiplies `data` by `e^{ip·x}` (or its conjugate).
    pub fn modulate(&self, grid: &Grid, data: &mut [C64], conjugate: bool) {
        if self.trivial {
            return;
        }
        data.par_iter_mut().enumerate().for_each(|(f, v)| {
            let p = self.at(grid.ijk(f));
            *v *= if conjugate { p.conj() } else { p };
        });
    }
}

/// FFT plan, lattice shift and wave vectors shared by spectral operators.
#[derive(Debug)]
pub struct SpectralBasis {
    grid: Grid,
    fft: Fft3,
    shift: [f64; 3],
    phase: LatticePhase,
    k_axes: [Vec<f64>; 3],
}

impl SpectralBasis {
    pub fn new(grid: Grid, shift: [f64; 3]) -> Self {
        let k0 = 2.0 * std::f64::consts::PI / grid.box_side();
        let k_axes = [0, 1, 2].map(|a| (0..grid.n()).map(|m| grid.wavenumber(m) + shift[a] * k0).collect());
        SpectralBasis {
            grid,
            fft: Fft3::new(grid.n()),
            shift,
            phase: LatticePhase::new(&grid, shift),
            k_axes,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shift(&self) -> [f64; 3] {
        self.shift
    }

    /// Wave vector `ξ + p` of DFT bin `flat`.
    pub fn wave_vector(&self, flat: usize) -> [f64; 3] {
        let [i, j, k] = self.grid.ijk(flat);
        [self.k_axes[0][i], self.k_axes[1][j], self.k_axes[2][k]]
    }

    /// Demodulates and transforms `v`.
    pub fn to_spectrum(&self, v: &[C64]) -> Vec<C64> {
        let mut w = v.to_vec();
        self.phase.modulate(&self.grid, &mut w, true);
        self.fft.forward(&mut w);
        w
    }

    /// Inverse of [`to_spectrum`](Self::to_spectrum), consuming the buffer.
    pub fn from_spectrum(&self, mut w: Vec<C64>) -> Vec<C64> {
        self.fft.inverse(&mut w);
        self.phase.modulate(&self.grid, &mut w, false);
        w
    }

    /// Multiplies a spectrum by `m(flat)` and returns to physical space.
    pub fn apply_table<F>(&self, spectrum: &[C64], m: F) -> Vec<C64>
    where
        F: Fn(usize) -> C64 + Sync,
    {
        let w = spectrum.par_iter().enumerate().map(|(f, &s)| s * m(f)).collect();
        self.from_spectrum(w)
    }

    /// Spectral `∂_axis` of a field whose spectrum is given.
    pub fn derivative(&self, spectrum: &[C64], axis: usize) -> Vec<C64> {
        self.apply_table(spectrum, |f| C64::new(0.0, self.wave_vector(f)[axis]))
    }

    /// Spectral Laplacian of a field whose spectrum is given.
    pub fn laplacian(&self, spectrum: &[C64]) -> Vec<C64> {
        self.apply_table(spectrum, |f| {
            let k = self.wave_vector(f);
            C64::new(-(k[0] * k[0] + k[1] * k[1] + k[2] * k[2]), 0.0)
        })
    }
}

/// Outcome of a Fourier multiplier application.
#[derive(Clone, Debug)]
pub struct MultiplierOutput {
    pub field: ScalarField,
    /// Integer lattice frequencies whose symbol was clamped to the floor.
    pub regularized: Vec<[i64; 3]>,
}

/// Clamps `s` to magnitude `floor` keeping its phase (`floor` itself for `s = 0`).
pub fn clamp_symbol(s: C64, floor: f64) -> (C64, bool) {
    let m = s.norm();
    if m >= floor {
        (s, false)
    } else if m == 0.0 {
        (C64::new(floor, 0.0), true)
    } else {
        (s * (floor / m), true)
    }
}

/// Forward DFT, multiplication by `symbol(ξ)` and inverse DFT.
///
/// The symbol is evaluated at the angular wave vector of each bin. Bins where
/// `|symbol| < floor` are clamped (phase kept) and listed in the output.
pub fn apply_fourier_multiplier<S>(field: &ScalarField, symbol: S, floor: f64) -> MultiplierOutput
where
    S: Fn([f64; 3]) -> C64 + Sync,
{
    let basis = SpectralBasis::new(*field.grid(), [0.0; 3]);
    apply_multiplier_on(&basis, field, symbol, floor)
}

/// As [`apply_fourier_multiplier`] on a possibly shifted lattice.
pub fn apply_multiplier_on<S>(basis: &SpectralBasis, field: &ScalarField, symbol: S, floor: f64) -> MultiplierOutput
where
    S: Fn([f64; 3]) -> C64 + Sync,
{
    let grid = *basis.grid();
    let spectrum = basis.to_spectrum(field.values());
    let table: Vec<(C64, bool)> = (0..grid.node_count())
        .into_par_iter()
        .map(|f| clamp_symbol(symbol(basis.wave_vector(f)), floor))
        .collect();
    let regularized = table
        .iter()
        .enumerate()
        .filter(|(_, (_, r))| *r)
        .map(|(f, _)| {
            let [i, j, k] = grid.ijk(f);
            [
                grid.signed_frequency(i),
                grid.signed_frequency(j),
                grid.signed_frequency(k),
            ]
        })
        .collect();
    let values = basis.apply_table(&spectrum, |f| table[f].0);
    MultiplierOutput {
        field: ScalarField::from_values(grid, values).expect("same grid"),
        regularized,
    }
}
