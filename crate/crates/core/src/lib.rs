//! Auto-calibrated parallel compressive sensing.
//!
//! Jointly recovers a transform-sparse signal `x` (with `z = Psi x` sparse)
//! and per-channel sensitivities `s_i = B h_i` from partial Fourier samples
//! `y_i = F_Omega(s_i . x)`. The bilinear problem is lifted to the linear
//! system `Y = A X` with `X = z (x) H` block-sparse, and solved by
//! l1,2-regularized least squares.

pub mod analysis;
pub mod error;
pub mod liftops;
pub mod linalg;
pub mod modelgen;
pub mod retrieval;
pub mod rng;
pub mod solver;
pub mod transforms;

pub use error::{Error, Result};
pub use num_complex::Complex64;
