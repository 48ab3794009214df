//! Fast Toeplitz sequence operators.
//!
//! A Toeplitz neural operator mixes each channel of an `n x d` sequence with
//! its own Toeplitz matrix `T_ij = k(i - j)`. This crate provides three ways
//! to apply such operators and the oracles used to check them:
//!
//! - [`tcore`]: exact kernels, circulant-embedding FFT matvec, decay bias and
//!   the MLP-driven baseline operator.
//! - [`ski`]: the sparse plus low-rank bidirectional operator built from a
//!   short convolution and structured kernel interpolation over inducing
//!   points, plus the sequential causal scan.
//! - [`fdom`]: operators parameterized directly by a sampled frequency
//!   response, with causality enforced through the discrete Hilbert transform.
//! - [`rpe`]: small MLP positional encoders with hand-written gradients,
//!   a piecewise-linearity probe and toy end-to-end fits.
//! - [`analysis`]: Nyström reconstruction, spectral norms, the SKI error bound
//!   evaluator and impulse-response decay diagnostics.
//! - [`oracle`]: dense brute-force reference implementations.

pub mod analysis;
pub mod config;
pub mod csv;
mod error;
pub mod fdom;
pub mod oracle;
pub mod rpe;
pub mod ski;
pub mod tcore;

pub use error::{Error, Flavor, Result};
pub use num_complex::Complex64;

/// Column-major dense matrix used for sequences (`n x d`) and oracles.
pub type Matrix = nalgebra::DMatrix<f64>;
