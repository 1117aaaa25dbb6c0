//! Alpha estimators: time-series OLS, Fama-MacBeth two-pass, and PCA for
//! latent factors.
//!
//! All three return an [`AlphaFit`] whose `scale` is the pooled residual RMS
//! `ŝ = sqrt((NT)⁻¹ Σ_i Σ_t û²_{i,t})` computed from the estimator's own
//! residuals. Per-asset work runs on the rayon pool; every asset is processed
//! independently so the result does not depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{top_k_eigen, Cholesky, EigenPairs, Matrix};
use crate::panel::{validate_panel, AlphaFit, EstimatorKind, FactorPanel, ReturnPanel, Violation};
use crate::scalar::Scalar;

/// Intermediate quantities of the two-pass estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct FmIntermediate<T> {
    /// `N × K` time-series slopes.
    pub beta_hat: Matrix<T>,
    pub lambda_hat: Vec<T>,
    pub ybar: Vec<T>,
    pub fbar: Vec<T>,
}

/// Intermediate quantities of the PCA estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct PcIntermediate<T> {
    /// `(NT)⁻¹ Σ_t ỹ_t ỹ_tᵀ`.
    pub sigma_y: Matrix<T>,
    /// `N × K`, normalized so that `beta_pcᵀ beta_pc = N·I_K`.
    pub beta_pc: Matrix<T>,
    pub lambda_pc: Vec<T>,
    /// `K × T` estimated factors `N⁻¹ beta_pcᵀ ỹ_t`.
    pub fhat: Matrix<T>,
    pub ybar: Vec<T>,
    pub eigen: EigenPairs<T>,
}

fn check_fit_ready<T: Scalar>(returns: &ReturnPanel<T>, factors: &FactorPanel<T>) -> Result<()> {
    let report = validate_panel(returns, factors);
    if report.is_ok() {
        return Ok(());
    }
    if report.violations.len() == 1 && report.violations[0] == Violation::SingularFactorCovariance {
        return Err(Error::SingularFactorCovariance);
    }
    Err(Error::InvalidConfig(format!("panel not fit-ready: {report}")))
}

fn row_means<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let t = T::of(m.cols() as f64);
    (0..m.rows()).map(|i| m.row(i).iter().copied().sum::<T>() / t).collect()
}

/// Pooled residual RMS, rejecting panels that are fitted exactly.
fn pooled_scale<T: Scalar>(residuals: &Matrix<T>, returns: &Matrix<T>) -> Result<T> {
    let count = T::of((residuals.rows() * residuals.cols()) as f64);
    let sum_sq = |m: &Matrix<T>| -> T {
        (0..m.rows())
            .into_par_iter()
            .map(|i| m.row(i).iter().map(|&u| u * u).sum::<T>())
            .collect::<Vec<T>>()
            .into_iter()
            .sum()
    };
    let scale = (sum_sq(residuals) / count).sqrt();
    let panel_scale = (sum_sq(returns) / count).sqrt();
    if !(scale > T::degenerate_tol() * panel_scale) {
        return Err(Error::DegenerateScale {
            scale: scale.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(scale)
}

/// Time-series slopes `β̂_i` (rows of an `N × K` matrix) and the factor means.
fn time_series_slopes<T: Scalar>(returns: &ReturnPanel<T>, factors: &FactorPanel<T>) -> Result<(Matrix<T>, Vec<T>)> {
    let k = factors.n_factors();
    let n = returns.n_assets();
    let fbar = factors.means();
    if k == 0 {
        return Ok((Matrix::zeros(n, 0), fbar));
    }
    let chol = Cholesky::factor(&factors.centered_cross_product()).map_err(|_| Error::SingularFactorCovariance)?;
    let fv = factors.values();
    let y = returns.returns();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            let mut b: Vec<T> = (0..k)
                .map(|p| fv.row(p).iter().zip(yi).map(|(&f, &v)| (f - fbar[p]) * v).sum())
                .collect();
            chol.solve_in_place(&mut b);
            b
        })
        .collect();
    Ok((Matrix::from_vec_unchecked(n, k, rows.concat()), fbar))
}

/// `y_{i,t} − α_i − β_iᵀ x_t` for all i, t.
fn residuals<T: Scalar>(y: &Matrix<T>, alphas: &[T], betas: &Matrix<T>, x: &Matrix<T>) -> Matrix<T> {
    let (n, t) = y.shape();
    let k = betas.cols();
    let rows: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bi = betas.row(i);
            (0..t)
                .map(|s| {
                    let fit = (0..k).fold(alphas[i], |acc, p| acc + bi[p] * x[(p, s)]);
                    y[(i, s)] - fit
                })
                .collect()
        })
        .collect();
    Matrix::from_vec_unchecked(n, t, rows.concat())
}

/// Cross-sectional regression of `ybar` on a constant and `beta`:
/// `λ̂ = (βᵀ M β)⁻¹ βᵀ M ȳ` with `M = I − N⁻¹ιιᵀ`.
///
/// The Gram matrix is declared singular against the uncentered `βᵀβ`
/// diagonal so that a cross-section with identical loadings is caught even
/// though its centered Gram is numerically zero.
pub fn cross_sectional_premia<T: Scalar>(beta: &Matrix<T>, ybar: &[T]) -> Result<Vec<T>> {
    let (n, k) = beta.shape();
    if n <= k {
        return Err(Error::InvalidConfig(format!("need N > K for the cross-sectional step (N={n}, K={k})")));
    }
    let nn = T::of(n as f64);
    let bmean: Vec<T> = (0..k).map(|p| (0..n).map(|i| beta[(i, p)]).sum::<T>() / nn).collect();
    let ymean = ybar.iter().copied().sum::<T>() / nn;
    let mut gram = Matrix::zeros(k, k);
    let mut rhs = Matrix::zeros(k, 1);
    let mut reference = T::zero();
    for p in 0..k {
        let raw: T = (0..n).map(|i| beta[(i, p)] * beta[(i, p)]).sum();
        reference = reference.max(raw);
        rhs[(p, 0)] = (0..n).map(|i| (beta[(i, p)] - bmean[p]) * (ybar[i] - ymean)).sum();
        for q in 0..=p {
            let v: T = (0..n).map(|i| (beta[(i, p)] - bmean[p]) * (beta[(i, q)] - bmean[q])).sum();
            gram[(p, q)] = v;
            gram[(q, p)] = v;
        }
    }
    let chol = Cholesky::factor_with_reference(&gram, reference).map_err(|_| Error::SingularBetaGram)?;
    Ok(chol.solve(&rhs)?.column(0))
}

/// Per-asset OLS of returns on a constant and the factors.
pub fn fit_ols<T: Scalar>(returns: &ReturnPanel<T>, factors: &FactorPanel<T>) -> Result<AlphaFit<T>> {
    check_fit_ready(returns, factors)?;
    let y = returns.returns();
    let (betas, fbar) = time_series_slopes(returns, factors)?;
    let ybar = row_means(y);
    let alphas: Vec<T> = (0..y.rows())
        .map(|i| {
            let bi = betas.row(i);
            bi.iter().zip(&fbar).fold(ybar[i], |acc, (&b, &f)| acc - b * f)
        })
        .collect();
    let resid = residuals(y, &alphas, &betas, factors.values());
    let scale = pooled_scale(&resid, y)?;
    Ok(AlphaFit {
        estimator: EstimatorKind::Ols,
        alphas,
        betas,
        residuals: resid,
        scale,
        lambda: None,
        eigen: None,
    })
}

/// Steps 1–2 of the two-pass estimator.
pub fn fama_macbeth_steps<T: Scalar>(returns: &ReturnPanel<T>, factors: &FactorPanel<T>) -> Result<FmIntermediate<T>> {
    check_fit_ready(returns, factors)?;
    if factors.is_empty() {
        return Err(Error::InvalidConfig("Fama-MacBeth needs at least one observed factor".into()));
    }
    let (beta_hat, fbar) = time_series_slopes(returns, factors)?;
    let ybar = row_means(returns.returns());
    let lambda_hat = cross_sectional_premia(&beta_hat, &ybar)?;
    Ok(FmIntermediate {
        beta_hat,
        lambda_hat,
        ybar,
        fbar,
    })
}

/// Fama-MacBeth alphas `α̂_i = ȳ_i − β̂_iᵀ λ̂` for non-tradable factors.
///
/// Residuals are `y_{i,t} − (α̂_i + β̂_iᵀ f_t)`.
pub fn fit_fama_macbeth<T: Scalar>(returns: &ReturnPanel<T>, factors: &FactorPanel<T>) -> Result<AlphaFit<T>> {
    let fm = fama_macbeth_steps(returns, factors)?;
    let alphas = loadings_alphas(&fm.beta_hat, &fm.ybar, &fm.lambda_hat);
    let y = returns.returns();
    let resid = residuals(y, &alphas, &fm.beta_hat, factors.values());
    let scale = pooled_scale(&resid, y)?;
    Ok(AlphaFit {
        estimator: EstimatorKind::FamaMacBeth,
        alphas,
        betas: fm.beta_hat,
        residuals: resid,
        scale,
        lambda: Some(fm.lambda_hat),
        eigen: None,
    })
}

fn loadings_alphas<T: Scalar>(beta: &Matrix<T>, ybar: &[T], lambda: &[T]) -> Vec<T> {
    (0..beta.rows())
        .map(|i| beta.row(i).iter().zip(lambda).fold(ybar[i], |acc, (&b, &l)| acc - b * l))
        .collect()
}

/// Steps 1–3 of the latent-factor estimator.
pub fn pca_steps<T: Scalar>(returns: &ReturnPanel<T>, k: usize) -> Result<PcIntermediate<T>> {
    let (n, t) = returns.returns().shape();
    if n < 3 {
        return Err(Error::NTooSmall(n));
    }
    if k == 0 || k >= n.min(t) {
        return Err(Error::InvalidK { k, n: n.min(t) });
    }
    let y = returns.returns();
    let ybar = row_means(y);
    let demeaned = Matrix::from_fn(n, t, |i, s| y[(i, s)] - ybar[i]);
    let norm = T::of((n * t) as f64);

    let upper: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ri = demeaned.row(i);
            (0..=i)
                .map(|j| ri.iter().zip(demeaned.row(j)).map(|(&a, &b)| a * b).sum::<T>() / norm)
                .collect()
        })
        .collect();
    let mut sigma_y = Matrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            sigma_y[(i, j)] = v;
            sigma_y[(j, i)] = v;
        }
    }

    let eigen = top_k_eigen(&sigma_y, k)?;
    let root_n = T::of(n as f64).sqrt();
    let beta_pc = eigen.vectors.scale(root_n);
    let nn = T::of(n as f64);
    let fhat = Matrix::from_fn(k, t, |p, s| (0..n).map(|i| beta_pc[(i, p)] * demeaned[(i, s)]).sum::<T>() / nn);
    let lambda_pc = cross_sectional_premia(&beta_pc, &ybar)?;
    Ok(PcIntermediate {
        sigma_y,
        beta_pc,
        lambda_pc,
        fhat,
        ybar,
        eigen,
    })
}

/// PCA alphas `α̂_i = ȳ_i − β̂_iᵀ λ̂` with `k` latent factors.
///
/// Residuals are `y_{i,t} − (α̂_i + β̂_iᵀ f̂_t)` with `f̂_t = N⁻¹ β̂ᵀ ỹ_t`.
pub fn fit_pca<T: Scalar>(returns: &ReturnPanel<T>, k: usize) -> Result<AlphaFit<T>> {
    let pc = pca_steps(returns, k)?;
    let alphas = loadings_alphas(&pc.beta_pc, &pc.ybar, &pc.lambda_pc);
    let y = returns.returns();
    let resid = residuals(y, &alphas, &pc.beta_pc, &pc.fhat);
    let scale = pooled_scale(&resid, y)?;
    Ok(AlphaFit {
        estimator: EstimatorKind::Pca,
        alphas,
        betas: pc.beta_pc,
        residuals: resid,
        scale,
        lambda: Some(pc.lambda_pc),
        eigen: Some(pc.eigen),
    })
}

/// Dispatches on the estimator tag; `k` is only used by PCA.
pub fn fit<T: Scalar>(
    kind: EstimatorKind,
    returns: &ReturnPanel<T>,
    factors: &FactorPanel<T>,
    k: usize,
) -> Result<AlphaFit<T>> {
    match kind {
        EstimatorKind::Ols => fit_ols(returns, factors),
        EstimatorKind::FamaMacBeth => fit_fama_macbeth(returns, factors),
        EstimatorKind::Pca => fit_pca(returns, k),
    }
}
