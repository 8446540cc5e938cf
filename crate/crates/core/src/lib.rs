//! Reconstruction of the electro-kinetic mobility `L` and the conductivity `σ`
//! from internal data `D = L·E` of the time-harmonic Maxwell system.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`], [`stencil`], [`fourier`], [`domain`], [`norm`], [`interp`], [`io`]:
//!   periodic-grid fields and the calculus on them.
//! * [`cgo`]: complex geometrical optics solutions `E = e^{iζ·x}(η + R)`.
//! * [`forward`]: synthetic coefficients, internal data and boundary traces.
//! * [`transport`]: the two-measurement transport inversion by characteristics.
//! * [`matrix`]: the six-measurement variant `∇L + ΓL = 0`.
//! * [`recovery`]: `E = D/L`, then `n` and `σ`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cgo;
pub mod domain;
pub mod error;
pub mod forward;
pub mod fourier;
pub mod grid;
pub mod interp;
pub mod io;
pub mod matrix;
pub mod norm;
pub mod recovery;
pub mod stencil;
pub mod transport;
pub mod vec3;

pub use error::{Error, Result};
pub use grid::{Field, Grid, Mask, ScalarField, VectorField, C64};
