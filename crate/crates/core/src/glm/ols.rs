use super::qr::PivotedQr;
use super::{Design, GlmError, Scalar};

/// Least-squares fit with the intercept as the first coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedLinearModel<T> {
    pub coefficients: Vec<T>,
    /// RSS / (n − p).
    pub residual_variance: T,
    pub design_column_names: Vec<String>,
    pub n_obs: usize,
    inverse_root: Vec<T>,
}

/// Ordinary least squares through a column-pivoted QR factorisation.
pub fn ols_fit<T: Scalar>(design: &Design<T>, response: &[T]) -> Result<FittedLinearModel<T>, GlmError> {
    let n = design.nrows();
    let p = design.ncols();
    if response.len() != n {
        return Err(GlmError::DimensionMismatch {
            expected: n,
            got: response.len(),
        });
    }
    if n <= p {
        return Err(GlmError::TooFewRows { rows: n, cols: p });
    }
    if response.iter().any(|v| !v.is_finite()) {
        return Err(GlmError::NonFinite { what: "response" });
    }
    let flat: Vec<T> = (0..n).flat_map(|i| design.row(i).iter().copied()).collect();
    let qr = PivotedQr::factor(n, p, &flat, None, design.names())?;
    let coefficients = qr.solve(response);
    let rss = (0..n).fold(T::zero(), |acc, i| {
        let fitted = dot(design.row(i), &coefficients);
        let r = response[i] - fitted;
        acc + r * r
    });
    Ok(FittedLinearModel {
        residual_variance: rss / T::from_usize(n - p).unwrap(),
        coefficients,
        design_column_names: design.names().to_vec(),
        n_obs: n,
        inverse_root: qr.inverse_root(),
    })
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

impl<T: Scalar> FittedLinearModel<T> {
    /// Intercept plus the dot product with a covariate row (no intercept entry).
    pub fn predict(&self, covariates: &[T]) -> Result<T, GlmError> {
        if covariates.len() + 1 != self.coefficients.len() {
            return Err(GlmError::DimensionMismatch {
                expected: self.coefficients.len() - 1,
                got: covariates.len(),
            });
        }
        Ok(self.coefficients[0] + dot(&self.coefficients[1..], covariates))
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients.len()
    }

    /// Degrees of freedom of the residual variance.
    pub fn residual_df(&self) -> usize {
        self.n_obs - self.coefficients.len()
    }

    /// Row-major `p × p` matrix `M` with `(XᵀX)⁻¹ = M Mᵀ`.
    pub fn unscaled_covariance_root(&self) -> &[T] {
        &self.inverse_root
    }

    /// `(XᵀX)⁻¹`, row-major.
    pub fn unscaled_covariance(&self) -> Vec<T> {
        let p = self.coefficients.len();
        let m = &self.inverse_root;
        let mut out = vec![T::zero(); p * p];
        for i in 0..p {
            for j in 0..p {
                out[i * p + j] = dot(&m[i * p..(i + 1) * p], &m[j * p..(j + 1) * p]);
            }
        }
        out
    }
}
