//! Numerical kernels: symmetric eigensolvers and special functions.

mod eigen;
mod special;

pub use eigen::{
    eig_dense, eig_symmetric, eig_symmetric_split, eig_symmetric_with, eig_tridiagonal,
    eigenvalues_tridiagonal, EigenConfig, Spectrum, DEFAULT_DENSE_LIMIT,
};
pub use special::{airy_ai, airy_ai_with_derivative, airy_zero, bessel_j};
