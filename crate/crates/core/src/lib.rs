//! Spectral laboratory for non-selfadjoint Witten Laplacians of
//! Kramers-Fokker-Planck type.
//!
//! Pipeline: a Morse weight `phi` and a constant structure matrix `A`
//! define a twisted de Rham complex whose degree-0 Laplacian is the
//! kinetic Fokker-Planck generator. The crate finds the critical
//! landscape of `phi`, computes the harmonic-oscillator eigenvalue
//! lattice from the Hessian data, verifies the dynamical averaging
//! hypotheses, assembles an exponentially fitted discrete complex whose
//! Maxwellian kernel is exact, and resolves the low-lying spectrum down
//! to the exponentially small tunneling splitting of the double well.

pub mod complex;
pub mod eigen;
pub mod error;
pub mod grid;
pub mod hypotheses;
pub mod lab;
pub mod landscape;
pub mod poly;
pub mod rng;
pub mod sparse;
pub mod symbols;

pub use complex::DiscreteComplex;
pub use error::CoreError;
pub use grid::GridSpec;
pub use landscape::{CriticalPoint, ModelSpec, WellStructure};
pub use symbols::{MuLattice, QuadraticForm, SymbolSet};
