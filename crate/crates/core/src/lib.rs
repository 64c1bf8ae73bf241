//! Numerical laboratory for the elastic energy of a thin sheet with a single
//! disclination.
//!
//! The sheet is modelled either as a nonlinear plate (`Model::Plate`, unknown
//! `y: B₁ → ℝ³`) or in the Föppl–von Kármán approximation (`Model::Fvk`,
//! unknowns `u: B₁ → ℝ²`, `v: B₁ → ℝ`). Both are discretized on a log-radial
//! polar grid over the annulus `h/10 ≤ |x| ≤ 1`, minimized with L-BFGS, and
//! inspected through curvature diagnostics built on boundary integrals of the
//! gradient map.

pub mod curvature;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod harness;
pub mod optimize;
mod precond;
pub mod radial;

pub use error::{Error, Result};
pub use geometry::{Model, Params};
pub use grid::{Field, Map3, PolarGrid, ScalarField, VectorField2};

/// Stamp written into every output file.
pub const VERSION_STAMP: &str = concat!("disclab ", env!("CARGO_PKG_VERSION"));
