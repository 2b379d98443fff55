//! Helpers shared by the integration tests: independent reference
//! computations that do not go through the crate's own fitting code.

#![allow(dead_code)]

pub mod dsep_oracle;

use std::path::PathBuf;

use hypothetica::sim::{simulate, DgpParams, IceMechanism};
use hypothetica::TrialDataset;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        assert!(a[piv][col].abs() > 1e-14, "singular system");
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// OLS coefficients (intercept first) from the normal equations `X'X β = X'y`.
pub fn normal_equations(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = rows[0].len() + 1;
    let mut xtx = vec![vec![0.0; p]; p];
    let mut xty = vec![0.0; p];
    for (r, &yi) in rows.iter().zip(y) {
        let x: Vec<f64> = std::iter::once(1.0).chain(r.iter().copied()).collect();
        for i in 0..p {
            xty[i] += x[i] * yi;
            for j in 0..p {
                xtx[i][j] += x[i] * x[j];
            }
        }
    }
    solve(xtx, xty)
}

pub fn predict(beta: &[f64], row: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(row).map(|(b, x)| b * x).sum::<f64>()
}

pub fn params(regime: IceMechanism, n: usize, k: usize) -> DgpParams {
    DgpParams {
        n,
        k,
        ..DgpParams::with_regime(regime)
    }
}

pub fn sim(regime: IceMechanism, n: usize, k: usize, seed: u64) -> TrialDataset {
    simulate(&params(regime, n, k), seed).expect("valid parameters")
}

/// Arm mean of the observed baseline covariate and of a per-subject value.
pub fn arm_mean(data: &TrialDataset, arm: bool, value: impl Fn(usize) -> f64) -> f64 {
    let idx: Vec<usize> = (0..data.n()).filter(|&i| data.subjects()[i].a0 == arm).collect();
    idx.iter().map(|&i| value(i)).sum::<f64>() / idx.len() as f64
}
