use super::{GlmError, Scalar};

/// Row-major design matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Design<T> {
    rows: usize,
    names: Vec<String>,
    data: Vec<T>,
}

impl<T: Scalar> Design<T> {
    /// Empty design with an intercept followed by the named covariates.
    pub fn with_intercept<S: AsRef<str>>(covariates: &[S]) -> Self {
        let mut names = Vec::with_capacity(covariates.len() + 1);
        names.push("(intercept)".to_string());
        names.extend(covariates.iter().map(|s| s.as_ref().to_string()));
        Design {
            rows: 0,
            names,
            data: Vec::new(),
        }
    }

    /// Builds from covariate rows; the intercept is added.
    pub fn from_rows<S: AsRef<str>>(covariates: &[S], rows: &[Vec<T>]) -> Result<Self, GlmError> {
        let mut d = Self::with_intercept(covariates);
        for r in rows {
            d.push_row(r)?;
        }
        Ok(d)
    }

    /// Intercept-only design with `n` rows.
    pub fn intercept_only(n: usize) -> Self {
        Design {
            rows: n,
            names: vec!["(intercept)".to_string()],
            data: vec![T::one(); n],
        }
    }

    /// Appends a row of covariates (without the intercept).
    pub fn push_row(&mut self, covariates: &[T]) -> Result<(), GlmError> {
        let p = self.ncols();
        if covariates.len() + 1 != p {
            return Err(GlmError::DimensionMismatch {
                expected: p - 1,
                got: covariates.len(),
            });
        }
        self.data.push(T::one());
        self.data.extend_from_slice(covariates);
        self.rows += 1;
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.ncols() + j]
    }

    /// Full row including the intercept.
    pub fn row(&self, i: usize) -> &[T] {
        let p = self.ncols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }
}
