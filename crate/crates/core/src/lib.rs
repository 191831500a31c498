//! Risk bounds and experiments for minimum-norm kernel interpolation in
//! high dimensions.
//!
//! The crate computes the curvature constants and implicit regularization of
//! inner-product and RBF kernels, spectra of synthetic covariance models,
//! minimum-norm interpolants and kernel ridge fits, and the data-dependent
//! variance and bias bounds built from them.

// LAPACK symbols come from the system OpenBLAS.
#[cfg(feature = "lapack")]
#[link(name = "openblas")]
extern "C" {}

pub mod bounds;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod linalg;
pub mod mnist;
pub mod rng;
pub mod spectra;
pub mod synthetic;

pub use error::{Error, IdxErrorKind, Result};
pub use estimator::{fit, predict, FitOptions, FitState, KernelRidge, RidgeConvention};
pub use kernel::{curvature_constants, CurvatureConstants, KernelFamily, KernelSpec, Profile, RegMode};
pub use spectra::{SpectrumKind, SpectrumModel};
