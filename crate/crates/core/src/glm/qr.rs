//! Householder QR with column pivoting (Businger–Golub).

use super::{GlmError, Scalar, RANK_TOLERANCE};

/// Factorisation `A P = Q R` of an `n × p` matrix, `n ≥ p`.
#[derive(Debug, Clone)]
pub(crate) struct PivotedQr<T> {
    n: usize,
    p: usize,
    /// Column-major: R on and above the diagonal, Householder vectors below
    /// (implicit unit leading entry).
    packed: Vec<T>,
    tau: Vec<T>,
    /// `perm[k]` is the original column stored at position `k`.
    pub(crate) perm: Vec<usize>,
}

impl<T: Scalar> PivotedQr<T> {
    /// Factorises a row-major `n × p` matrix given as `rows`, optionally
    /// scaling row `i` by `row_scale[i]`.
    pub(crate) fn factor(
        n: usize,
        p: usize,
        rows: &[T],
        row_scale: Option<&[T]>,
        names: &[String],
    ) -> Result<Self, GlmError> {
        if n < p {
            return Err(GlmError::TooFewRows { rows: n, cols: p });
        }
        let mut a = vec![T::zero(); n * p];
        for i in 0..n {
            let s = row_scale.map_or(T::one(), |w| w[i]);
            for j in 0..p {
                a[j * n + i] = rows[i * p + j] * s;
            }
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::NonFinite { what: "design" });
        }
        let mut perm: Vec<usize> = (0..p).collect();
        let mut tau = vec![T::zero(); p];
        let mut largest = T::zero();
        let tol = T::c(RANK_TOLERANCE);

        for k in 0..p {
            // Pivot on the largest remaining column norm (recomputed exactly).
            let mut best = k;
            let mut best_norm = T::neg_infinity();
            for j in k..p {
                let col = &a[j * n + k..(j + 1) * n];
                let norm = col.iter().fold(T::zero(), |acc, &v| acc + v * v);
                if norm > best_norm {
                    best_norm = norm;
                    best = j;
                }
            }
            if best != k {
                for i in 0..n {
                    a.swap(k * n + i, best * n + i);
                }
                perm.swap(k, best);
            }

            let norm = best_norm.sqrt();
            if k == 0 {
                largest = norm;
            }
            if norm <= tol * largest || norm == T::zero() {
                return Err(GlmError::SingularDesign {
                    column: names[perm[k]].clone(),
                    pivot: norm.to_f64().unwrap_or(0.0),
                    largest: largest.to_f64().unwrap_or(0.0),
                });
            }

            let x0 = a[k * n + k];
            let beta = if x0 >= T::zero() { -norm } else { norm };
            tau[k] = (beta - x0) / beta;
            let scale = T::one() / (x0 - beta);
            for i in k + 1..n {
                a[k * n + i] = a[k * n + i] * scale;
            }
            a[k * n + k] = beta;

            for j in k + 1..p {
                let mut dot = a[j * n + k];
                for i in k + 1..n {
                    dot = dot + a[k * n + i] * a[j * n + i];
                }
                let f = tau[k] * dot;
                a[j * n + k] = a[j * n + k] - f;
                for i in k + 1..n {
                    a[j * n + i] = a[j * n + i] - f * a[k * n + i];
                }
            }
        }
        Ok(PivotedQr {
            n,
            p,
            packed: a,
            tau,
            perm,
        })
    }

    fn r(&self, i: usize, j: usize) -> T {
        self.packed[j * self.n + i]
    }

    /// Overwrites `y` with `Qᵀ y`.
    fn apply_qt(&self, y: &mut [T]) {
        let n = self.n;
        for k in 0..self.p {
            let mut dot = y[k];
            for i in k + 1..n {
                dot = dot + self.packed[k * n + i] * y[i];
            }
            let f = self.tau[k] * dot;
            y[k] = y[k] - f;
            for i in k + 1..n {
                y[i] = y[i] - f * self.packed[k * n + i];
            }
        }
    }

    /// Least-squares solution in the original column order.
    pub(crate) fn solve(&self, y: &[T]) -> Vec<T> {
        let mut qty = y.to_vec();
        self.apply_qt(&mut qty);
        let mut z = vec![T::zero(); self.p];
        for k in (0..self.p).rev() {
            let mut s = qty[k];
            for j in k + 1..self.p {
                s = s - self.r(k, j) * z[j];
            }
            z[k] = s / self.r(k, k);
        }
        let mut beta = vec![T::zero(); self.p];
        for (k, &orig) in self.perm.iter().enumerate() {
            beta[orig] = z[k];
        }
        beta
    }

    /// `P R⁻¹`, row-major `p × p`; `(AᵀA)⁻¹ = (P R⁻¹)(P R⁻¹)ᵀ`.
    pub(crate) fn inverse_root(&self) -> Vec<T> {
        let p = self.p;
        let mut rinv = vec![T::zero(); p * p];
        for j in 0..p {
            rinv[j * p + j] = T::one() / self.r(j, j);
            for i in (0..j).rev() {
                let mut s = T::zero();
                for k in i + 1..=j {
                    s = s + self.r(i, k) * rinv[k * p + j];
                }
                rinv[i * p + j] = -s / self.r(i, i);
            }
        }
        let mut out = vec![T::zero(); p * p];
        for (k, &orig) in self.perm.iter().enumerate() {
            out[orig * p..(orig + 1) * p].copy_from_slice(&rinv[k * p..(k + 1) * p]);
        }
        out
    }
}
