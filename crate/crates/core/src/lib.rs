//! Multi-output Bayesian calibration of computer models with on-site
//! Gaussian-process surrogates.
//!
//! The pipeline, in order of use:
//!
//! * [`design`] builds maximin Latin hypercube designs over the calibration
//!   space, one per field site.
//! * [`simulator`] is a cheap multi-output test function standing in for an
//!   expensive simulator, with a known true calibration parameter.
//! * [`oss`] fits one GP surrogate per (site, output) on the calibration
//!   inputs only.
//! * [`basis`] reduces the frequencies of each output property to principal
//!   components of the observed field-minus-simulation discrepancies.
//! * [`koh`] evaluates the Kennedy–O'Hagan joint likelihood in a first-PC
//!   space, exploiting the block-diagonal structure the on-site surrogates
//!   give the simulation covariance.
//! * [`calibrate`] provides modular MAP estimation and Metropolis-within-Gibbs
//!   sampling for the shared calibration parameter.
//! * [`predict`] produces posterior predictions in basis space and in the
//!   original outputs, and leave-one-out cross-validation.

pub mod basis;
pub mod calibrate;
pub mod design;
pub mod error;
pub mod gp;
pub mod io;
pub mod kernel;
pub mod koh;
pub mod linalg;
pub mod optim;
pub mod oss;
pub mod predict;
pub mod simulator;

pub use error::{Error, Result};
pub use gp::{GpConfig, GpFit};
pub use kernel::KernelHyper;
