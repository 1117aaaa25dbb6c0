//! De-randomized decision rule.
//!
//! The randomized test is repeated `B` times with independent perturbations and
//! the retain fraction `Q = B⁻¹ #{b : Z⁽ᵇ⁾ ≤ c_τ}` is compared with a threshold
//! that tends to `1 − τ`:
//!
//! * `Lil`: `(1 − τ) − sqrt(τ(1 − τ)) · sqrt(2 log log B / B)`, needs `B ≥ 16`;
//! * `FofB`: `(1 − τ) − B^{-1/4}`.
//!
//! Replication `b` draws its perturbation from seed `derive_seed(master, [DERAND, b])`,
//! so replications can run in any order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha_test::{compute_psi, critical_value, TestConfig};
use crate::error::{Error, Result};
use crate::panel::AlphaFit;
use crate::rng::{self, purpose};
use crate::scalar::Scalar;

/// Smallest B for which the LIL band is defined and monotone.
pub const MIN_LIL_REPLICATIONS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    Lil,
    #[serde(rename = "fb")]
    FofB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    RetainNull,
    RejectNull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerandConfig {
    pub tau: f64,
    /// Number of replications; `0` resolves to `round(log² N)`.
    #[serde(default)]
    pub b_count: usize,
    pub threshold: ThresholdRule,
    #[serde(default)]
    pub master_seed: u64,
}

impl DerandConfig {
    pub fn new(tau: f64, b_count: usize, threshold: ThresholdRule, master_seed: u64) -> Self {
        Self {
            tau,
            b_count,
            threshold,
            master_seed,
        }
    }

    /// Replication count actually used for a cross-section of `n` assets.
    pub fn resolve_b(&self, n: usize) -> usize {
        if self.b_count > 0 {
            self.b_count
        } else {
            auto_b(n)
        }
    }
}

/// `round(log² N)`, at least 1.
pub fn auto_b(n: usize) -> usize {
    let l = (n.max(1) as f64).ln();
    ((l * l + 0.5).floor() as usize).max(1)
}

/// Retain threshold for `B` replications at level `tau`.
pub fn threshold_value(rule: ThresholdRule, tau: f64, b: usize) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidTau(tau));
    }
    if b == 0 {
        return Err(Error::InvalidConfig("B must be at least 1".into()));
    }
    let bf = b as f64;
    match rule {
        ThresholdRule::FofB => Ok((1.0 - tau) - bf.powf(-0.25)),
        ThresholdRule::Lil => {
            if b < MIN_LIL_REPLICATIONS {
                return Err(Error::BTooSmallForLil(b));
            }
            let band = (2.0 * bf.ln().ln() / bf).sqrt();
            Ok((1.0 - tau) - (tau * (1.0 - tau)).sqrt() * band)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerandReport {
    pub q_value: f64,
    pub threshold_value: f64,
    pub decision: Decision,
    pub per_rep_z: Vec<f64>,
    pub b_used: usize,
    pub tau: f64,
    pub rule: ThresholdRule,
    pub critical_value: f64,
}

/// Seed of replication `b`.
pub fn replication_seed(master: u64, b: usize) -> u64 {
    rng::derive_seed(master, &[purpose::DERAND, b as u64])
}

/// Runs the B replications on a precomputed ψ vector.
pub fn derandomize_psi<T: Scalar>(psi: &[T], cfg: &DerandConfig) -> Result<DerandReport> {
    let n = psi.len();
    let b = cfg.resolve_b(n);
    let threshold = threshold_value(cfg.threshold, cfg.tau, b)?;
    let c: f64 = critical_value::<f64>(n, cfg.tau)?;
    let psi64: Vec<f64> = psi.iter().map(|p| p.to_f64().unwrap_or(f64::NAN)).collect();
    let per_rep_z: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|rep| rng::perturbed_max(replication_seed(cfg.master_seed, rep), n, |i| psi64[i]).0)
        .collect();
    Ok(summarize(per_rep_z, c, threshold, cfg))
}

/// Counts retained replications and applies the threshold.
pub fn summarize(per_rep_z: Vec<f64>, critical_value: f64, threshold: f64, cfg: &DerandConfig) -> DerandReport {
    let b = per_rep_z.len();
    let retained = per_rep_z.iter().filter(|&&z| z <= critical_value).count();
    let q_value = retained as f64 / b as f64;
    let decision = if q_value >= threshold {
        Decision::RetainNull
    } else {
        Decision::RejectNull
    };
    DerandReport {
        q_value,
        threshold_value: threshold,
        decision,
        per_rep_z,
        b_used: b,
        tau: cfg.tau,
        rule: cfg.threshold,
        critical_value,
    }
}

/// De-randomized rule on a fitted model: ψ is computed once from `test_cfg`
/// (ν and exponent mode), the level comes from `cfg.tau`.
pub fn run_derandomized<T: Scalar>(fit: &AlphaFit<T>, test_cfg: &TestConfig, cfg: &DerandConfig) -> Result<DerandReport> {
    let psi = compute_psi(fit, test_cfg, fit.n_periods(), fit.n_assets())?;
    derandomize_psi(&psi, cfg)
}
