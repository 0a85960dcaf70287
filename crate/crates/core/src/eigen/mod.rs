//! From-scratch dense and sparse linear algebra kernels.
//!
//! Nothing here knows about grids or symbols; the rest of the crate
//! builds on these routines. Dense eigenvalues go through Hessenberg
//! reduction and Francis double-shift QR; large non-symmetric spectra
//! go through shift-invert Arnoldi on top of a banded LU with partial
//! pivoting.

pub mod arnoldi;
pub mod banded;
pub mod dense;
pub mod svd;

pub use arnoldi::{shift_invert_arnoldi, ArnoldiOptions, ArnoldiResult, LinearOp};
pub use banded::{BandedLu, BandedMatrix};
pub use dense::{dense_eigs, dense_eigs_with_vectors, symmetric_eigen, DMat};
pub use svd::smallest_singular_value;
