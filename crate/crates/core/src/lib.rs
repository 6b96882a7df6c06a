//! Domain-localized ensemble Kalman filtering for linear partially observed
//! systems on a cyclic domain.
//!
//! The crate provides the exact Kalman filter and a perturbed-observation
//! EnKF as baselines, the localized filter itself, closed-form theory
//! diagnostics (Riccati maps, localization inconsistency, weak-interaction
//! coefficients and sample-size formulas), a Monte Carlo concentration
//! harness, and the experiment drivers behind the `lenkf` command line tool.

pub mod concentration;
pub mod domain;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod matrixkit;
pub mod model;
pub mod rng;
pub mod theory;

pub use domain::CyclicDomain;
pub use error::{Error, Result};
pub use filters::{EnsembleState, ErrorTracker, KalmanState, LocalGain};
pub use matrixkit::{CovMatrix, LocalizationMask, MaskKind, Norms};
pub use model::{LinearSystem, TurbulenceRegime};
pub use rng::{Purpose, Streams};
pub use theory::TheoryParams;
