//! Return and factor panels, fitted results, and the pre-fit validation gate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, EigenPairs, Matrix};
use crate::scalar::Scalar;

/// `N × T` excess returns (percent per period) with asset and date labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct ReturnPanel<T> {
    assets: Vec<String>,
    dates: Vec<String>,
    excess_returns: Matrix<T>,
}

impl<T: Scalar> ReturnPanel<T> {
    pub fn new(assets: Vec<String>, dates: Vec<String>, excess_returns: Matrix<T>) -> Result<Self> {
        if excess_returns.shape() != (assets.len(), dates.len()) {
            return Err(Error::DimensionMismatch(format!(
                "{} assets and {} dates for a {}x{} return matrix",
                assets.len(),
                dates.len(),
                excess_returns.rows(),
                excess_returns.cols()
            )));
        }
        Ok(Self {
            assets,
            dates,
            excess_returns,
        })
    }

    /// Panel with generated labels `a0..` and `1..=T`.
    pub fn from_matrix(excess_returns: Matrix<T>) -> Self {
        let assets = (0..excess_returns.rows()).map(|i| format!("a{i}")).collect();
        let dates = (1..=excess_returns.cols()).map(|t| t.to_string()).collect();
        Self {
            assets,
            dates,
            excess_returns,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn n_periods(&self) -> usize {
        self.dates.len()
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn returns(&self) -> &Matrix<T> {
        &self.excess_returns
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            assets: self.assets.clone(),
            dates: self.dates.clone(),
            excess_returns: self.excess_returns.scale(c),
        }
    }
}

/// `K × T` factor realizations. `K = 0` is the latent-factor case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct FactorPanel<T> {
    names: Vec<String>,
    values: Matrix<T>,
}

impl<T: Scalar> FactorPanel<T> {
    pub fn new(names: Vec<String>, values: Matrix<T>) -> Result<Self> {
        if names.len() != values.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{} factor names for {} factor rows",
                names.len(),
                values.rows()
            )));
        }
        Ok(Self { names, values })
    }

    pub fn empty(t: usize) -> Self {
        Self {
            names: Vec::new(),
            values: Matrix::zeros(0, t),
        }
    }

    pub fn from_matrix(values: Matrix<T>) -> Self {
        let names = (1..=values.rows()).map(|k| format!("f{k}")).collect();
        Self { names, values }
    }

    pub fn n_factors(&self) -> usize {
        self.names.len()
    }

    pub fn n_periods(&self) -> usize {
        self.values.cols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix<T> {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Time means `f̄` (length K).
    pub fn means(&self) -> Vec<T> {
        let t = T::of(self.n_periods() as f64);
        (0..self.n_factors())
            .map(|k| self.values.row(k).iter().copied().sum::<T>() / t)
            .collect()
    }

    /// `Σ_t (f_t − f̄)(f_t − f̄)ᵀ`, the unnormalized centered cross-product.
    pub fn centered_cross_product(&self) -> Matrix<T> {
        let k = self.n_factors();
        let fbar = self.means();
        let mut s = Matrix::zeros(k, k);
        for a in 0..k {
            for b in 0..=a {
                let v: T = self
                    .values
                    .row(a)
                    .iter()
                    .zip(self.values.row(b))
                    .map(|(&x, &y)| (x - fbar[a]) * (y - fbar[b]))
                    .sum();
                s[(a, b)] = v;
                s[(b, a)] = v;
            }
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Ols,
    #[serde(rename = "fm")]
    FamaMacBeth,
    #[serde(rename = "pca")]
    Pca,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Ols => "OLS",
            EstimatorKind::FamaMacBeth => "FM",
            EstimatorKind::Pca => "PC",
        })
    }
}

/// Result of one of the alpha estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct AlphaFit<T> {
    pub estimator: EstimatorKind,
    pub alphas: Vec<T>,
    /// `N × K` loadings.
    pub betas: Matrix<T>,
    /// `N × T` estimator-specific residuals.
    pub residuals: Matrix<T>,
    /// Pooled residual RMS `ŝ`.
    pub scale: T,
    /// Cross-sectional risk premia (FM and PC only).
    pub lambda: Option<Vec<T>>,
    /// Leading eigenpairs of the second-moment matrix (PC only).
    pub eigen: Option<EigenPairs<T>>,
}

impl<T: Scalar> AlphaFit<T> {
    pub fn n_assets(&self) -> usize {
        self.alphas.len()
    }

    pub fn n_periods(&self) -> usize {
        self.residuals.cols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    DimensionMismatch { returns_periods: usize, factor_periods: usize },
    NonFinite { what: String },
    TooFewAssets { n: usize },
    InsufficientObservations { t: usize, k: usize },
    SingularFactorCovariance,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DimensionMismatch {
                returns_periods,
                factor_periods,
            } => write!(
                f,
                "dimension mismatch: returns span {returns_periods} periods, factors span {factor_periods}"
            ),
            Violation::NonFinite { what } => write!(f, "non-finite entries in {what}"),
            Violation::TooFewAssets { n } => write!(f, "too few assets: N={n} (need N >= 3)"),
            Violation::InsufficientObservations { t, k } => {
                write!(f, "insufficient observations: T={t} with K={k} factors (need T >= K+2)")
            }
            Violation::SingularFactorCovariance => f.write_str("singular factor covariance"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return f.write_str("ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

/// Lists every reason the pair cannot be fitted; an empty report means fit-ready.
pub fn validate_panel<T: Scalar>(returns: &ReturnPanel<T>, factors: &FactorPanel<T>) -> ValidationReport {
    let mut violations = Vec::new();
    let t = returns.n_periods();
    let k = factors.n_factors();
    if !factors.is_empty() && factors.n_periods() != t {
        violations.push(Violation::DimensionMismatch {
            returns_periods: t,
            factor_periods: factors.n_periods(),
        });
    }
    if returns.returns().data().iter().any(|v| !v.is_finite()) {
        violations.push(Violation::NonFinite {
            what: "returns".into(),
        });
    }
    if factors.values().data().iter().any(|v| !v.is_finite()) {
        violations.push(Violation::NonFinite {
            what: "factors".into(),
        });
    }
    if returns.n_assets() < 3 {
        violations.push(Violation::TooFewAssets {
            n: returns.n_assets(),
        });
    }
    if t < k + 2 {
        violations.push(Violation::InsufficientObservations { t, k });
    }
    if k > 0 && factors.n_periods() >= 2 && Cholesky::factor(&factors.centered_cross_product()).is_err() {
        violations.push(Violation::SingularFactorCovariance);
    }
    ValidationReport { violations }
}
