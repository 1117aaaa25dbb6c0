//! Seeded simulation designs for the Monte Carlo experiments.
//!
//! Tradable-factor design:
//!
//! ```text
//! y_{i,t} = α_i + Σ_p β_{i,p} f_{p,t} + u_{i,t}
//! f_t     = f̄ + Φ f_{t−1} + ζ_t,      f̄ = (0.53, 0.19, 0.19), Φ = diag(−0.1, 0.2, −0.2)
//! u_t     = γ g_t + ξ_t,               g_t = φ_g g_{t−1} + χ_t
//! ```
//!
//! with `β_{i,1} ~ U(0.3, 1.8)`, `β_{i,2} ~ U(−1, 1)`, `β_{i,3} ~ U(−0.6, 0.9)`,
//! `γ_i ~ U(0.7, 0.9)` and `ζ_t`, `χ_t` standard normal. The non-tradable and
//! latent designs replace the factor term by `β_iᵀλ + β_iᵀv_t` with
//! `v_t = Φ v_{t−1} + ζ_t` and `λ_p ~ U(0, 1/2)`.
//!
//! `f̄` enters the recursion as an intercept, so the stationary factor mean is
//! `(I − Φ)⁻¹ f̄`. Autoregressions start from their stationary law and run 100
//! burn-in steps. GARCH variances follow
//! `h²_{i,t} = ω_i + a_i ξ²_{i,t−1} + b_i h²_{i,t−1}` from `h²_{i,0} = ω_i/(1 − a_i − b_i)`.
//! Loadings and GARCH parameters are redrawn for every seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::panel::{FactorPanel, ReturnPanel};
use crate::rng::{purpose, Stream, StreamKey};

pub const FACTOR_INTERCEPT: [f64; 3] = [0.53, 0.19, 0.19];
pub const FACTOR_AR: [f64; 3] = [-0.1, 0.2, -0.2];
pub const BURN_IN: usize = 100;

const LOADING_RANGES: [(f64, f64); 3] = [(0.3, 1.8), (-1.0, 1.0), (-0.6, 0.9)];
const GAMMA_RANGE: (f64, f64) = (0.7, 0.9);
const GARCH_OMEGA: (f64, f64) = (0.01, 0.05);
const GARCH_ALPHA: (f64, f64) = (0.01, 0.04);
const GARCH_BETA: (f64, f64) = (0.85, 0.95);
const PREMIA_RANGE: (f64, f64) = (0.0, 0.5);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Gaussian,
    StudentT { df: f64 },
    Garch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmittedStrength {
    /// Every asset loads on the omitted factor.
    Strong,
    /// `⌊N^0.8⌋` assets load on it.
    SemiStrong,
    /// `⌊N^0.4⌋` assets load on it.
    Weak,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PricingStrength {
    AllStrong,
    /// `β_{i,2} = β_{i,3} = 0` for `N − ⌊N^0.8⌋` random assets.
    OneStrongRestSemiStrong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaScheme {
    Null,
    /// `α_i ~ N(0, 1)` on a random subset of `⌈fraction·N⌉` assets.
    SparseNormal { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Tradable,
    NonTradable,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpConfig {
    pub n: usize,
    pub t: usize,
    pub error_kind: ErrorKind,
    pub phi_g: f64,
    pub omitted_strength: OmittedStrength,
    pub pricing_strength: PricingStrength,
    pub alpha_scheme: AlphaScheme,
    pub model_kind: ModelKind,
    #[serde(default)]
    pub seed: u64,
    /// Debug hook: `(asset, alpha)` pairs written over the drawn alphas.
    #[serde(default)]
    pub alpha_overrides: Vec<(usize, f64)>,
    /// Keep factor innovations, the omitted factor and idiosyncratic errors.
    #[serde(default)]
    pub keep_components: bool,
}

impl DgpConfig {
    /// Baseline design: Gaussian errors, `φ_g = 0.4`, strong omitted factor,
    /// tradable factors, zero alphas.
    pub fn baseline(n: usize, t: usize, seed: u64) -> Self {
        Self {
            n,
            t,
            error_kind: ErrorKind::Gaussian,
            phi_g: 0.4,
            omitted_strength: OmittedStrength::Strong,
            pricing_strength: PricingStrength::AllStrong,
            alpha_scheme: AlphaScheme::Null,
            model_kind: ModelKind::Tradable,
            seed,
            alpha_overrides: Vec::new(),
            keep_components: false,
        }
    }

    /// Non-tradable design: factors `v_t`, premia `λ`, no omitted factor.
    pub fn non_tradable(n: usize, t: usize, seed: u64) -> Self {
        Self {
            omitted_strength: OmittedStrength::None,
            model_kind: ModelKind::NonTradable,
            ..Self::baseline(n, t, seed)
        }
    }

    /// Latent design: as [`DgpConfig::non_tradable`] with the factors withheld.
    pub fn latent(n: usize, t: usize, seed: u64) -> Self {
        Self {
            model_kind: ModelKind::Latent,
            ..Self::non_tradable(n, t, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n < 3 {
            return bad(format!("n must be at least 3, got {}", self.n));
        }
        if self.t < 2 {
            return bad(format!("t must be at least 2, got {}", self.t));
        }
        if !(self.phi_g.abs() < 1.0) {
            return bad(format!("phi_g must lie in (-1, 1), got {}", self.phi_g));
        }
        if let ErrorKind::StudentT { df } = self.error_kind {
            if !(df > 4.0) || !df.is_finite() {
                return bad(format!("Student-t df must exceed 4, got {df}"));
            }
        }
        if let AlphaScheme::SparseNormal { fraction } = self.alpha_scheme {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return bad(format!("mispricing fraction must lie in (0, 1], got {fraction}"));
            }
        }
        if let Some(&(i, a)) = self.alpha_overrides.iter().find(|(i, a)| *i >= self.n || !a.is_finite()) {
            return bad(format!("alpha override ({i}, {a}) invalid for n = {}", self.n));
        }
        Ok(())
    }
}

/// `⌊n^exponent⌋`, robust to `powf` landing just below an integer.
pub fn strength_count(n: usize, exponent: f64) -> usize {
    ((n as f64).powf(exponent) + 1e-9).floor() as usize
}

/// `⌈fraction·n⌉`, robust to products landing just above an integer.
pub fn mispriced_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64) - 1e-9).ceil().max(0.0) as usize
}

/// First `m` entries of a uniform random permutation of `0..n` (partial
/// Fisher-Yates). Prefixes are nested: the draw for `m` extends the draw for
/// any smaller `m` under the same stream.
pub fn random_subset(stream: &mut Stream, n: usize, m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let m = m.min(n);
    for j in 0..m {
        let r = j + stream.below((n - j) as u64) as usize;
        idx.swap(j, r);
    }
    idx.truncate(m);
    idx
}

/// Latent draws kept for diagnostics when `keep_components` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpComponents {
    /// `3 × T` factor innovations.
    pub zeta: Matrix<f64>,
    pub chi: Vec<f64>,
    pub omitted_factor: Vec<f64>,
    /// `N × T` idiosyncratic errors.
    pub xi: Matrix<f64>,
    /// `N × 3` loadings.
    pub betas: Matrix<f64>,
    pub gamma: Vec<f64>,
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPanel {
    pub returns: ReturnPanel<f64>,
    /// Empty for the latent design.
    pub factors: FactorPanel<f64>,
    pub true_alphas: Vec<f64>,
    /// Sorted indices with a nonzero alpha.
    pub mispriced_indices: Vec<usize>,
    pub components: Option<DgpComponents>,
}

/// Stationary AR(1) path of length `t` after burn-in; returns the
/// innovations that produced the recorded values alongside them.
fn ar1_path(stream: &mut Stream, intercept: f64, phi: f64, t: usize) -> (Vec<f64>, Vec<f64>) {
    let mean = intercept / (1.0 - phi);
    let sd = (1.0 / (1.0 - phi * phi)).sqrt();
    let mut x = mean + sd * stream.normal();
    for _ in 0..BURN_IN {
        x = intercept + phi * x + stream.normal();
    }
    let mut values = Vec::with_capacity(t);
    let mut shocks = Vec::with_capacity(t);
    for _ in 0..t {
        let e = stream.normal();
        x = intercept + phi * x + e;
        values.push(x);
        shocks.push(e);
    }
    (values, shocks)
}

fn idiosyncratic_row(kind: ErrorKind, root: &StreamKey, i: usize, t: usize) -> Vec<f64> {
    let mut s = root.child(purpose::IDIOSYNCRATIC).child(i as u64).stream();
    match kind {
        ErrorKind::Gaussian => (0..t).map(|_| s.normal()).collect(),
        ErrorKind::StudentT { df } => (0..t).map(|_| s.student_t(df)).collect(),
        ErrorKind::Garch => {
            let mut p = root.child(purpose::GARCH_PARAMS).child(i as u64).stream();
            let omega = p.uniform_range(GARCH_OMEGA.0, GARCH_OMEGA.1);
            let a = p.uniform_range(GARCH_ALPHA.0, GARCH_ALPHA.1);
            let b = p.uniform_range(GARCH_BETA.0, GARCH_BETA.1);
            let mut h2 = omega / (1.0 - a - b);
            let mut prev_sq = h2;
            let mut out = Vec::with_capacity(t);
            for step in 0..(BURN_IN + t) {
                h2 = omega + a * prev_sq + b * h2;
                let xi = h2.sqrt() * s.normal();
                prev_sq = xi * xi;
                if step >= BURN_IN {
                    out.push(xi);
                }
            }
            out
        }
    }
}

/// Draws one panel from `config`.
pub fn generate(config: &DgpConfig) -> Result<SimulatedPanel> {
    config.validate()?;
    let (n, t) = (config.n, config.t);
    let root = StreamKey::new(config.seed, &[]);
    let subsets = root.child(purpose::SUBSETS);

    let mut load = root.child(purpose::LOADINGS).stream();
    let mut betas = Matrix::<f64>::zeros(n, 3);
    for i in 0..n {
        for (p, &(lo, hi)) in LOADING_RANGES.iter().enumerate() {
            betas[(i, p)] = load.uniform_range(lo, hi);
        }
    }
    if config.pricing_strength == PricingStrength::OneStrongRestSemiStrong {
        let zeroed = n - strength_count(n, 0.8);
        for i in random_subset(&mut subsets.child(0).stream(), n, zeroed) {
            betas[(i, 1)] = 0.0;
            betas[(i, 2)] = 0.0;
        }
    }

    let mut gamma = vec![0.0; n];
    let loaded: Vec<usize> = match config.omitted_strength {
        OmittedStrength::Strong => (0..n).collect(),
        OmittedStrength::SemiStrong => random_subset(&mut subsets.child(1).stream(), n, strength_count(n, 0.8)),
        OmittedStrength::Weak => random_subset(&mut subsets.child(1).stream(), n, strength_count(n, 0.4)),
        OmittedStrength::None => Vec::new(),
    };
    let mut gs = root.child(purpose::OMITTED_LOADINGS).stream();
    for &i in &loaded {
        gamma[i] = gs.uniform_range(GAMMA_RANGE.0, GAMMA_RANGE.1);
    }

    let mut alphas = vec![0.0; n];
    if let AlphaScheme::SparseNormal { fraction } = config.alpha_scheme {
        let chosen = random_subset(&mut subsets.child(2).stream(), n, mispriced_count(n, fraction));
        let mut s = root.child(purpose::ALPHAS).stream();
        for &i in &chosen {
            let mut a = 0.0;
            while a == 0.0 {
                a = s.normal();
            }
            alphas[i] = a;
        }
    }
    for &(i, a) in &config.alpha_overrides {
        alphas[i] = a;
    }
    let mispriced_indices: Vec<usize> = (0..n).filter(|&i| alphas[i] != 0.0).collect();

    let intercept = match config.model_kind {
        ModelKind::Tradable => FACTOR_INTERCEPT,
        ModelKind::NonTradable | ModelKind::Latent => [0.0; 3],
    };
    let mut fs = root.child(purpose::FACTOR_INNOVATIONS).stream();
    let mut factor_rows = Vec::with_capacity(3);
    let mut zeta_rows = Vec::with_capacity(3);
    for p in 0..3 {
        let (v, z) = ar1_path(&mut fs, intercept[p], FACTOR_AR[p], t);
        factor_rows.push(v);
        zeta_rows.push(z);
    }
    let factors = Matrix::from_vec_unchecked(3, t, factor_rows.concat());

    let lambda = match config.model_kind {
        ModelKind::Tradable => None,
        ModelKind::NonTradable | ModelKind::Latent => {
            let mut s = root.child(purpose::RISK_PREMIA).stream();
            Some((0..3).map(|_| s.uniform_range(PREMIA_RANGE.0, PREMIA_RANGE.1)).collect::<Vec<f64>>())
        }
    };

    let (omitted, chi) = ar1_path(&mut root.child(purpose::OMITTED_INNOVATIONS).stream(), 0.0, config.phi_g, t);

    let xi_rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| idiosyncratic_row(config.error_kind, &root, i, t))
        .collect();

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let bi = betas.row(i);
            let premium = lambda
                .as_ref()
                .map_or(0.0, |l| bi.iter().zip(l).map(|(b, l)| b * l).sum::<f64>());
            (0..t)
                .map(|s| {
                    let systematic: f64 = (0..3).map(|p| bi[p] * factors[(p, s)]).sum();
                    alphas[i] + premium + systematic + gamma[i] * omitted[s] + xi_rows[i][s]
                })
                .collect()
        })
        .collect();
    let returns = ReturnPanel::from_matrix(Matrix::new(n, t, rows.concat())?);
    let factor_panel = match config.model_kind {
        ModelKind::Latent => FactorPanel::empty(t),
        _ => FactorPanel::from_matrix(factors),
    };

    let components = config.keep_components.then(|| DgpComponents {
        zeta: Matrix::from_vec_unchecked(3, t, zeta_rows.concat()),
        chi,
        omitted_factor: omitted,
        xi: Matrix::from_vec_unchecked(n, t, xi_rows.concat()),
        betas: betas.clone(),
        gamma: gamma.clone(),
        lambda: lambda.clone(),
    });

    Ok(SimulatedPanel {
        returns,
        factors: factor_panel,
        true_alphas: alphas,
        mispriced_indices,
        components,
    })
}

/// Sample moments of a simulated panel next to the values the design implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub factor_means: Vec<f64>,
    pub implied_factor_means: Vec<f64>,
    pub factor_autocorrelations: Vec<f64>,
    pub implied_factor_autocorrelations: Vec<f64>,
    pub omitted_variance: Option<f64>,
    pub implied_omitted_variance: f64,
    pub idiosyncratic_excess_kurtosis: Option<f64>,
    /// `6/(df − 4)` for Student-t, `0` for Gaussian, unknown for GARCH.
    pub implied_excess_kurtosis: Option<f64>,
    /// Largest `|ρ|` between the ζ rows, χ and the first ξ row.
    pub max_innovation_cross_correlation: Option<f64>,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let m = mean(x);
    let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    cov / var
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn excess_kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let (mut m2, mut m4) = (0.0, 0.0);
    for v in x {
        let d = (v - m) * (v - m);
        m2 += d;
        m4 += d * d;
    }
    let n = x.len() as f64;
    (m4 / n) / ((m2 / n) * (m2 / n)) - 3.0
}

/// Compares sample moments of `panel` with the values implied by `config`.
/// Quantities that need latent draws are reported only when the panel was
/// generated with `keep_components`.
pub fn sample_moments_check(panel: &SimulatedPanel, config: &DgpConfig) -> MomentReport {
    let f = panel.factors.values();
    let k = panel.factors.n_factors();
    let factor_means = (0..k).map(|p| mean(f.row(p))).collect();
    let factor_autocorrelations = (0..k).map(|p| lag1_autocorrelation(f.row(p))).collect();
    let implied_factor_means = match config.model_kind {
        ModelKind::Tradable => (0..3).map(|p| FACTOR_INTERCEPT[p] / (1.0 - FACTOR_AR[p])).collect(),
        ModelKind::NonTradable => vec![0.0; 3],
        ModelKind::Latent => Vec::new(),
    };
    let implied_factor_autocorrelations = if k == 0 { Vec::new() } else { FACTOR_AR.to_vec() };
    let implied_excess_kurtosis = match config.error_kind {
        ErrorKind::Gaussian => Some(0.0),
        ErrorKind::StudentT { df } => Some(6.0 / (df - 4.0)),
        ErrorKind::Garch => None,
    };
    let comps = panel.components.as_ref();
    let omitted_variance = comps.map(|c| {
        let m = mean(&c.omitted_factor);
        c.omitted_factor.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (c.omitted_factor.len() as f64 - 1.0)
    });
    let idiosyncratic_excess_kurtosis = comps.map(|c| excess_kurtosis(c.xi.data()));
    let max_innovation_cross_correlation = comps.map(|c| {
        let mut series: Vec<&[f64]> = (0..3).map(|p| c.zeta.row(p)).collect();
        series.push(&c.chi);
        series.push(c.xi.row(0));
        let mut worst: f64 = 0.0;
        for a in 0..series.len() {
            for b in (a + 1)..series.len() {
                worst = worst.max(correlation(series[a], series[b]).abs());
            }
        }
        worst
    });
    MomentReport {
        factor_means,
        implied_factor_means,
        factor_autocorrelations,
        implied_factor_autocorrelations,
        omitted_variance,
        implied_omitted_variance: 1.0 / (1.0 - config.phi_g * config.phi_g),
        idiosyncratic_excess_kurtosis,
        implied_excess_kurtosis,
        max_innovation_cross_correlation,
    }
}
