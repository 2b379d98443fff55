use super::ols::dot;
use super::qr::PivotedQr;
use super::{Design, GlmError, Scalar};

pub const MAX_ITERATIONS: usize = 100;
pub const COEF_TOLERANCE: f64 = 1e-8;
pub const LOGLIK_TOLERANCE: f64 = 1e-10;
/// |η| beyond which a fitted probability is numerically 0 or 1 in f64.
const SATURATION: f64 = 36.0;
const MAX_HALVINGS: usize = 30;
const STALL_STEP: f64 = 1e-4;

/// Why an IRLS fit is not a usable maximum-likelihood estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum FitDiagnostic {
    /// The linear predictor strictly separates the two classes.
    CompleteSeparation { iteration: usize },
    /// Some fitted probabilities are numerically 0 or 1, or the likelihood has
    /// flattened while coefficients still move: the MLE lies at infinity
    /// along a direction supported by part of the data only.
    QuasiSeparation { saturated_rows: usize },
    IterationLimit,
    /// The weighted design lost rank while iterating.
    WeightedDesignSingular { detail: String },
}

impl std::fmt::Display for FitDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitDiagnostic::CompleteSeparation { iteration } => {
                write!(f, "complete separation detected at iteration {iteration}")
            }
            FitDiagnostic::QuasiSeparation { saturated_rows } => {
                write!(f, "quasi-separation: {saturated_rows} fitted probabilities numerically 0 or 1")
            }
            FitDiagnostic::IterationLimit => write!(f, "no convergence within {MAX_ITERATIONS} iterations"),
            FitDiagnostic::WeightedDesignSingular { detail } => {
                write!(f, "weighted design became singular ({detail}); likely separation")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLogisticModel<T> {
    pub coefficients: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: T,
    pub diagnostic: Option<FitDiagnostic>,
    pub design_column_names: Vec<String>,
}

impl<T: Scalar> FittedLogisticModel<T> {
    /// Linear predictor for a covariate row (no intercept entry).
    pub fn linear_predictor(&self, covariates: &[T]) -> Result<T, GlmError> {
        if covariates.len() + 1 != self.coefficients.len() {
            return Err(GlmError::DimensionMismatch {
                expected: self.coefficients.len() - 1,
                got: covariates.len(),
            });
        }
        Ok(self.coefficients[0] + dot(&self.coefficients[1..], covariates))
    }

    /// P(response = 1 | covariates).
    pub fn predict_probability(&self, covariates: &[T]) -> Result<T, GlmError> {
        self.linear_predictor(covariates).map(expit)
    }

    /// P(response = 0 | covariates), computed without cancellation.
    pub fn predict_complement(&self, covariates: &[T]) -> Result<T, GlmError> {
        self.linear_predictor(covariates).map(|eta| expit(-eta))
    }
}

/// 1 / (1 + e^{-x}), evaluated on the branch that cannot overflow.
pub fn expit<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn logit<T: Scalar>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

/// log(1 + e^x) without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn log_likelihood<T: Scalar>(eta: &[T], y: &[T]) -> T {
    eta.iter()
        .zip(y)
        .fold(T::zero(), |acc, (&e, &yi)| acc + yi * e - softplus(e))
}

fn count_saturated<T: Scalar>(eta: &[T]) -> usize {
    eta.iter().filter(|e| e.abs() > T::c(SATURATION)).count()
}

fn strictly_separates<T: Scalar>(eta: &[T], y: &[T]) -> bool {
    let mut min_pos = T::infinity();
    let mut max_neg = T::neg_infinity();
    for (&e, &yi) in eta.iter().zip(y) {
        if yi > T::c(0.5) {
            min_pos = min_pos.min(e);
        } else {
            max_neg = max_neg.max(e);
        }
    }
    min_pos > max_neg
}

/// Bernoulli-logit maximum likelihood by iteratively reweighted least squares.
///
/// Stops when the largest coefficient change is below 1e-8, or the
/// log-likelihood changes by less than 1e-10 with a small step. A flat
/// likelihood with a large step is reported as quasi-separation. A step that
/// lowers the log-likelihood is halved until it does not. Separation is
/// reported through `converged = false` and a [`FitDiagnostic`] rather than
/// an error.
pub fn logistic_fit<T: Scalar>(design: &Design<T>, response: &[T]) -> Result<FittedLogisticModel<T>, GlmError> {
    let n = design.nrows();
    let p = design.ncols();
    if response.len() != n {
        return Err(GlmError::DimensionMismatch {
            expected: n,
            got: response.len(),
        });
    }
    let mut ones = 0usize;
    for (row, &v) in response.iter().enumerate() {
        if v == T::one() {
            ones += 1;
        } else if v != T::zero() {
            return Err(GlmError::NonBinary {
                row,
                value: v.to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    if ones == 0 || ones == n {
        return Err(GlmError::OneClass {
            class: if ones == 0 { 0 } else { 1 },
        });
    }
    if n < p {
        return Err(GlmError::TooFewRows { rows: n, cols: p });
    }
    let flat: Vec<T> = (0..n).flat_map(|i| design.row(i).iter().copied()).collect();
    // Rank check on the unweighted design.
    PivotedQr::factor(n, p, &flat, None, design.names())?;

    let linear = |beta: &[T]| -> Vec<T> { (0..n).map(|i| dot(design.row(i), beta)).collect() };

    let mut beta = vec![T::zero(); p];
    let mut eta = vec![T::zero(); n];
    let mut ll = log_likelihood(&eta, response);
    let mut diagnostic = None;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sw = Vec::with_capacity(n);
        let mut z = Vec::with_capacity(n);
        for i in 0..n {
            let mu = expit(eta[i]);
            let w = mu * (T::one() - mu);
            let s = w.sqrt();
            sw.push(s);
            // Working response scaled by √w: √w η + (y − μ)/√w.
            z.push(s * eta[i] + (response[i] - mu) / s);
        }
        let qr = match PivotedQr::factor(n, p, &flat, Some(&sw), design.names()) {
            Ok(qr) => qr,
            Err(e) => {
                // Rank is lost when a column is supported only on saturated rows.
                let saturated = count_saturated(&eta);
                diagnostic = Some(if saturated > 0 {
                    FitDiagnostic::QuasiSeparation { saturated_rows: saturated }
                } else {
                    FitDiagnostic::WeightedDesignSingular { detail: e.to_string() }
                });
                break;
            }
        };
        let proposal = qr.solve(&z);
        if proposal.iter().any(|v| !v.is_finite()) {
            let saturated = count_saturated(&eta);
            diagnostic = Some(if saturated > 0 {
                FitDiagnostic::QuasiSeparation { saturated_rows: saturated }
            } else {
                FitDiagnostic::WeightedDesignSingular {
                    detail: "non-finite update".into(),
                }
            });
            break;
        }

        let mut step: Vec<T> = proposal.iter().zip(&beta).map(|(&a, &b)| a - b).collect();
        let mut candidate: Vec<T> = beta.iter().zip(&step).map(|(&b, &s)| b + s).collect();
        let mut cand_eta = linear(&candidate);
        let mut cand_ll = log_likelihood(&cand_eta, response);
        let mut halvings = 0;
        while cand_ll < ll && halvings < MAX_HALVINGS {
            for s in step.iter_mut() {
                *s = *s * T::c(0.5);
            }
            candidate = beta.iter().zip(&step).map(|(&b, &s)| b + s).collect();
            cand_eta = linear(&candidate);
            cand_ll = log_likelihood(&cand_eta, response);
            halvings += 1;
        }

        let max_change = step.iter().fold(T::zero(), |m, s| m.max(s.abs()));
        let ll_change = (cand_ll - ll).abs();
        beta = candidate;
        eta = cand_eta;
        ll = cand_ll;

        if strictly_separates(&eta, response) {
            diagnostic = Some(FitDiagnostic::CompleteSeparation { iteration: iterations });
            break;
        }
        if max_change < T::c(COEF_TOLERANCE) || (ll_change < T::c(LOGLIK_TOLERANCE) && max_change < T::c(STALL_STEP)) {
            converged = true;
            break;
        }
        // A flat likelihood with large steps is divergence towards infinity, not convergence.
        if ll_change < T::c(LOGLIK_TOLERANCE) {
            diagnostic = Some(FitDiagnostic::QuasiSeparation {
                saturated_rows: count_saturated(&eta),
            });
            break;
        }
    }

    let saturated = count_saturated(&eta);
    if converged {
        if saturated > 0 {
            converged = false;
            diagnostic = Some(FitDiagnostic::QuasiSeparation { saturated_rows: saturated });
        }
    } else if diagnostic.is_none() {
        diagnostic = Some(if saturated > 0 {
            FitDiagnostic::QuasiSeparation { saturated_rows: saturated }
        } else {
            FitDiagnostic::IterationLimit
        });
    }

    Ok(FittedLogisticModel {
        coefficients: beta,
        converged,
        iterations,
        log_likelihood: ll,
        diagnostic,
        design_column_names: design.names().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn intercept_only_matches_logit_of_mean() {
        let y = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let m = logistic_fit(&Design::<f64>::intercept_only(8), &y).unwrap();
        assert!(m.converged);
        assert_abs_diff_eq!(m.coefficients[0], (1.0f64 / 3.0).ln(), epsilon = 1e-8);
    }

    #[test]
    fn separated_data_is_flagged() {
        let xs = [-3.0, -2.0, -1.0, 1.0, 2.0, 3.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let m = logistic_fit(&Design::from_rows(&["x"], &rows).unwrap(), &y).unwrap();
        assert!(!m.converged);
        assert!(matches!(m.diagnostic, Some(FitDiagnostic::CompleteSeparation { .. })));
    }

    #[test]
    fn quasi_separation_is_flagged() {
        // x = 0 carries both classes; x > 0 is all ones, x < 0 all zeros.
        let xs = [-2.0, -1.0, 0.0, 0.0, 1.0, 2.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let m = logistic_fit(&Design::from_rows(&["x"], &rows).unwrap(), &y).unwrap();
        assert!(!m.converged, "{m:?}");
        assert!(matches!(m.diagnostic, Some(FitDiagnostic::QuasiSeparation { .. })), "{m:?}");
    }

    #[test]
    fn one_class_is_degenerate() {
        let err = logistic_fit(&Design::<f64>::intercept_only(4), &[0.0; 4]).unwrap_err();
        assert_eq!(err, GlmError::OneClass { class: 0 });
    }

    #[test]
    fn non_binary_rejected() {
        assert!(matches!(
            logistic_fit(&Design::<f64>::intercept_only(3), &[0.0, 0.5, 1.0]),
            Err(GlmError::NonBinary { row: 1, .. })
        ));
    }

    #[test]
    fn expit_reference_values() {
        assert_eq!(expit(0.0f64), 0.5);
        // 1 / (1 + e^3), evaluated to 20 digits with mpmath.
        assert_abs_diff_eq!(expit(-3.0f64), 0.047425873177566781, epsilon = 1e-16);
        assert!(expit(-700.0f64) > 0.0);
        assert_eq!(expit(700.0f64), 1.0);
        assert!(expit(-800.0f64).is_finite());
    }
}
