//! Numerical calculus for expansive dilations: anisotropic quasi-norms,
//! admissible exponent ranges, Mihlin-type symbol estimation,
//! Littlewood-Paley kernel synthesis with Calderon-Zygmund decay checks, and
//! constructive atomic decomposition of molecules.
//!
//! The crate is organized bottom-up:
//!
//! * [`dilation`] — expansive matrices, spectra, margins, power caches;
//! * [`quasinorm`] — canonical ellipsoid families and the step quasi-norm;
//! * [`exponents`] — admissibility and multiplier-range arithmetic;
//! * [`field`] — sampled fields on dyadic grids, unitary DFT, resampling;
//! * [`partition`] — smooth dilation-adapted Littlewood-Paley partitions;
//! * [`mihlin`] — anisotropic derivative estimates of Fourier symbols;
//! * [`kernel`] — convolution-kernel slices and decay seminorm sweeps;
//! * [`quadrature`] — ellipsoid-restricted grid quadrature;
//! * [`poly`] — orthonormal polynomial bases and ellipsoid projections;
//! * [`atoms`] — atoms, molecules, and the constructive decomposition;
//! * [`operator`] — multiplier application and maximal-function proxies.

pub mod atoms;
pub mod dilation;
pub mod error;
pub mod exponents;
pub mod field;
pub mod kernel;
pub mod mihlin;
pub mod operator;
pub mod partition;
pub mod poly;
pub mod quadrature;
pub mod quasinorm;
pub(crate) mod sampling;

pub use error::{Error, Result};
