//! Testing for zero alphas in linear factor pricing models with many assets.
//!
//! The per-asset standardized alphas are mapped to `ψ_i`, perturbed with
//! independent standard normals and the maximum is compared with a Gumbel
//! critical value. A de-randomized rule repeats the perturbation `B` times.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choice.

pub mod derand;
pub mod dgp;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod ingest;
pub mod linalg;
pub mod panel;
pub mod rng;
pub mod scalar;

pub use alpha_test::{run_one_shot, ExponentMode, TestConfig, TestOutcome};
pub use derand::{run_derandomized, Decision, DerandConfig, DerandReport, ThresholdRule};
pub use dgp::{generate, DgpConfig, SimulatedPanel};
pub use error::{Error, Result};
pub use estimators::{fit, fit_fama_macbeth, fit_ols, fit_pca};
pub use harness::{power_curve, run_experiment, ExperimentReport, ExperimentSpec};
pub use ingest::{run_rolling, RollingResult};
pub use linalg::{EigenPairs, Matrix};
pub use panel::{validate_panel, AlphaFit, EstimatorKind, FactorPanel, ReturnPanel, ValidationReport};
pub use scalar::Scalar;

pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type ReturnPanelF64 = ReturnPanel<f64>;
pub type ReturnPanelF32 = ReturnPanel<f32>;
pub type FactorPanelF64 = FactorPanel<f64>;
pub type FactorPanelF32 = FactorPanel<f32>;
pub type AlphaFitF64 = AlphaFit<f64>;
pub type AlphaFitF32 = AlphaFit<f32>;
pub type EigenPairsF64 = EigenPairs<f64>;
pub type TestOutcomeF64 = TestOutcome<f64>;
