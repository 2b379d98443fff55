//! Estimation of hypothetical estimands in longitudinal randomised trials
//! with intercurrent events (ICEs): G-formula, inverse probability of ICE
//! weighting and multiple imputation estimators, graphical identifiability
//! checks on single-world intervention graphs, and a Monte-Carlo study harness.

pub mod data;
pub mod gformula;
pub mod glm;
pub mod graph;
pub mod ipw;
pub mod mi;
pub mod model;
pub mod rng;
pub mod sim;
pub mod stats;
pub mod study;

pub use data::{read_csv, write_csv, DataError, EstimateResult, Regime, Schema, Subject, TrialDataset};
pub use glm::{expit, logistic_fit, logit, ols_fit, Design, GlmError, Scalar};

/// Linear model fitted in double precision.
pub type FittedLinearModel = glm::FittedLinearModel<f64>;
/// Logistic model fitted in double precision.
pub type FittedLogisticModel = glm::FittedLogisticModel<f64>;
/// Double-precision design matrix.
pub type DesignMatrix = glm::Design<f64>;
