//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use zeroalpha::linalg::Matrix;
use zeroalpha::rng::{Stream, StreamKey};
use zeroalpha::{FactorPanel, ReturnPanel};

pub fn stream(seed: u64) -> Stream {
    StreamKey::new(seed, &[777]).stream()
}

/// Panel with planted alphas, K factors and Gaussian noise.
pub fn panel(n: usize, t: usize, k: usize, seed: u64) -> (ReturnPanel<f64>, FactorPanel<f64>) {
    let mut s = stream(seed);
    let f: Vec<f64> = (0..k * t).map(|_| 0.5 + s.normal()).collect();
    let f = Matrix::new(k, t, f).unwrap();
    let mut y = Vec::with_capacity(n * t);
    for _ in 0..n {
        let a = s.normal();
        let b: Vec<f64> = (0..k).map(|_| s.uniform_range(-1.0, 1.5)).collect();
        for c in 0..t {
            let sys: f64 = (0..k).map(|p| b[p] * f[(p, c)]).sum();
            y.push(a + sys + s.normal());
        }
    }
    (
        ReturnPanel::from_matrix(Matrix::new(n, t, y).unwrap()),
        FactorPanel::from_matrix(f),
    )
}

pub fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Per-asset `(X'X)⁻¹X'y` with `X = [1, f_t']`; returns (alphas, N×K slopes).
pub fn ols_oracle(r: &ReturnPanel<f64>, f: &FactorPanel<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, t) = r.returns().shape();
    let k = f.n_factors();
    let x = DMatrix::from_fn(t, k + 1, |s, j| if j == 0 { 1.0 } else { f.values()[(j - 1, s)] });
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let mut alphas = Vec::with_capacity(n);
    let mut betas = DMatrix::zeros(n, k);
    for i in 0..n {
        let y = DVector::from_row_slice(r.returns().row(i));
        let coef = &xtx_inv * x.transpose() * y;
        alphas.push(coef[0]);
        for p in 0..k {
            betas[(i, p)] = coef[p + 1];
        }
    }
    (alphas, betas)
}

/// Two-pass reference: time-series betas, then ȳ on `[1, β̂]`; returns (alphas, λ).
pub fn fm_oracle(r: &ReturnPanel<f64>, f: &FactorPanel<f64>) -> (Vec<f64>, Vec<f64>) {
    let (n, t) = r.returns().shape();
    let k = f.n_factors();
    let (_, betas) = ols_oracle(r, f);
    let ybar = DVector::from_fn(n, |i, _| r.returns().row(i).iter().sum::<f64>() / t as f64);
    let z = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { betas[(i, j - 1)] });
    let coef = (z.transpose() * &z).try_inverse().unwrap() * z.transpose() * &ybar;
    let lambda = coef.rows(1, k).into_owned();
    let alphas = (ybar - &betas * &lambda).iter().copied().collect();
    (alphas, lambda.iter().copied().collect())
}

pub fn max_rel_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
