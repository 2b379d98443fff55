//! Regression kernels shared by every estimator: least squares through a
//! column-pivoted Householder QR and Bernoulli-logit IRLS.
//!
//! The kernels are generic over the floating point type so that `f32`
//! designs can be fitted with the same code; estimators use `f64`.

mod design;
mod logistic;
mod ols;
mod qr;

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

pub use design::Design;
pub use logistic::{expit, logistic_fit, logit, FitDiagnostic, FittedLogisticModel};
pub use ols::{ols_fit, FittedLinearModel};
pub(crate) use ols::dot;

/// Floating point scalar accepted by the kernels.
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable")
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + Debug + Send + Sync + 'static {}

/// Relative pivot tolerance below which a design is treated as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GlmError {
    #[error("design is rank deficient (pivot {pivot:e} relative to largest {largest:e} at column '{column}')")]
    SingularDesign {
        column: String,
        pivot: f64,
        largest: f64,
    },
    #[error("need more rows than coefficients: {rows} rows for {cols} coefficients")]
    TooFewRows { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("binary response has a single class ({class}); logistic model is degenerate")]
    OneClass { class: u8 },
    #[error("response must be 0 or 1, found {value} at row {row}")]
    NonBinary { row: usize, value: f64 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
}
