//! Spectral-Galerkin laboratory for the Wick-renormalized Anderson operator
//! `H = -Delta + xi` on the flat two-dimensional torus `[0, L)^2`.
//!
//! The crate builds white noise in a truncated Fourier basis, implements the
//! Littlewood–Paley paraproduct calculus and the renormalized resonant term,
//! assembles and diagonalizes the regularized operator, and derives from its
//! spectral decomposition heat kernels, Gaussian free fields, Wick squares,
//! Fredholm determinants, polymer and diffusion paths and loop soups.  The
//! `experiments` module runs the quantitative checks that tie these objects
//! together; the `anderson` binary exposes them on the command line.

// Gates are written as `!(err <= tol)` on purpose, so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate openblas_src;

pub mod basis;
pub mod cache;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod gff;
pub mod grid;
pub mod heat;
pub mod linalg;
pub mod loops;
pub mod lp;
pub mod noise;
pub mod paracontrolled;
pub mod paths;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
pub use field::SpectralField;
pub use grid::TorusGrid;
pub use noise::{sample_white_noise, NoiseRealization};
