//! Floating-point abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the estimators and the test statistic are generic over.
///
/// Implemented for `f32` and `f64`. Random draws and configuration values
/// are produced in `f64` and converted with [`Scalar::of`].
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant into `Self`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in scalar type")
    }

    /// Relative pivot floor below which a Cholesky factorization is declared singular.
    fn pivot_tol() -> Self {
        Self::of(1e-12).max(Self::epsilon() * Self::of(16.0))
    }

    /// Relative floor for the pooled residual scale.
    fn degenerate_tol() -> Self {
        Self::of(1e-14).max(Self::epsilon() * Self::of(16.0))
    }

    /// Relative eigen-equation residual tolerance for an `n × n` problem.
    fn eigen_tol(n: usize) -> Self {
        Self::of(1e-8).max(Self::epsilon() * Self::of(64.0 * n as f64))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
