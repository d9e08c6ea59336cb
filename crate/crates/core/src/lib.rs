//! Gamma-Phi multiclass surrogate losses and numerical
//! classification-calibration analysis.
//!
//! * [`loss`] and [`conditions`]: loss families and checks of their
//!   sufficient conditions for calibration.
//! * [`risk`]: conditional risks, limiting risks of divergent score
//!   configurations and conditional Bayes risk solvers.
//! * [`calibration`]: sweeps of the simplex measuring calibration gaps.
//! * [`counterexample`]: the non-calibrated loss with a flat point in γ.
//! * [`consistency`]: population-level simulation of consistency transfer
//!   on finite instance spaces.

pub mod calibration;
pub mod conditions;
pub mod consistency;
pub mod counterexample;
pub mod error;
pub mod loss;
pub mod optim;
pub mod risk;
pub mod vectors;

pub use error::{Error, Result};
pub use loss::{GammaSpec, LossSpec, PhiSpec};
pub use vectors::{Permutation, ProbVector, ScoreVector};

/// Version of the JSON report layouts emitted by this crate.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
