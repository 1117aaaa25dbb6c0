//! Monte Carlo rejection frequencies and power curves.
//!
//! Replication `m` of grid cell `c` draws its panel from
//! `derive_seed(seed, [c, m, DGP])`, its one-shot perturbation from
//! `derive_seed(seed, [c, m, TEST])` and its de-randomization master seed from
//! `derive_seed(seed, [c, m, DERAND])`. The mispricing fraction is not part of
//! the path, so every point of a power curve sees the same panels up to the
//! alphas, and fraction 0 reproduces the null cell.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alpha_test::{run_one_shot, TestConfig};
use crate::derand::{run_derandomized, Decision, DerandConfig};
use crate::dgp::{generate, AlphaScheme, DgpConfig, ModelKind};
use crate::error::{Error, Result};
use crate::estimators::fit;
use crate::panel::EstimatorKind;
use crate::rng::{derive_seed, purpose};

fn default_pca_k() -> usize {
    3
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPoint {
    pub n: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Template; `n`, `t` and `seed` are replaced per cell and replication.
    pub dgp: DgpConfig,
    pub grid: Vec<GridPoint>,
    pub replications: usize,
    pub test: TestConfig,
    #[serde(default)]
    pub derand: Option<DerandConfig>,
    #[serde(default)]
    pub power_fractions: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    /// Number of latent factors for the latent design.
    #[serde(default = "default_pca_k")]
    pub pca_k: usize,
    /// Prepend a fraction-0 row to power curves.
    #[serde(default = "default_true")]
    pub include_null: bool,
}

impl ExperimentSpec {
    pub fn new(dgp: DgpConfig, grid: Vec<GridPoint>, replications: usize, test: TestConfig, seed: u64) -> Self {
        Self {
            dgp,
            grid,
            replications,
            test,
            derand: None,
            power_fractions: None,
            seed,
            pca_k: default_pca_k(),
            include_null: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("experiment grid is empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications must be at least 1".into()));
        }
        if self.pca_k == 0 {
            return Err(Error::InvalidConfig("pca_k must be at least 1".into()));
        }
        self.test.validate()?;
        if let Some(d) = &self.derand {
            if !(d.tau > 0.0 && d.tau < 1.0) {
                return Err(Error::InvalidTau(d.tau));
            }
        }
        if let Some(fr) = &self.power_fractions {
            if let Some(f) = fr.iter().find(|f| !(**f >= 0.0 && **f <= 1.0)) {
                return Err(Error::InvalidConfig(format!("power fraction {f} outside [0, 1]")));
            }
        }
        for g in &self.grid {
            let mut probe = self.dgp.clone();
            probe.n = g.n;
            probe.t = g.t;
            probe.validate()?;
        }
        Ok(())
    }

    /// Estimator implied by the factor design.
    pub fn estimator(&self) -> EstimatorKind {
        estimator_for(self.dgp.model_kind)
    }
}

pub fn estimator_for(kind: ModelKind) -> EstimatorKind {
    match kind {
        ModelKind::Tradable => EstimatorKind::Ols,
        ModelKind::NonTradable => EstimatorKind::FamaMacBeth,
        ModelKind::Latent => EstimatorKind::Pca,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub t: usize,
    pub setting: String,
    /// Mispricing fraction for power-curve rows.
    pub fraction: Option<f64>,
    pub estimator: EstimatorKind,
    pub replications: usize,
    pub rejections_one_shot: usize,
    pub rejection_rate_one_shot: f64,
    pub rejections_derand: Option<usize>,
    pub rejection_rate_derand: Option<f64>,
    /// `sqrt(r(1 − r)/M)` of the one-shot rate.
    pub mc_std_error: f64,
    pub mc_std_error_derand: Option<f64>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
}

impl ExperimentReport {
    /// Copy with wall times zeroed, the only run-dependent content.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for c in &mut r.cells {
            c.wall_time_secs = 0.0;
        }
        r
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with wall times zeroed; identical specs give identical strings.
    pub fn canonical_json(&self) -> Result<String> {
        self.without_timings().to_json()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Rate tables with rows `T`, columns `N` and one panel per setting and
    /// statistic. Missing combinations are left empty.
    pub fn write_tables_csv(&self, path: &Path) -> Result<()> {
        let mut ns: Vec<usize> = self.cells.iter().map(|c| c.n).collect();
        ns.sort_unstable();
        ns.dedup();
        let mut ts: Vec<usize> = self.cells.iter().map(|c| c.t).collect();
        ts.sort_unstable();
        ts.dedup();
        let mut settings: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !settings.contains(&c.setting.as_str()) {
                settings.push(&c.setting);
            }
        }
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["panel".to_string(), "statistic".into(), "T".into()];
        header.extend(ns.iter().map(|n| format!("N={n}")));
        w.write_record(&header)?;
        let stats: [(&str, fn(&CellResult) -> Option<f64>); 2] = [
            ("one_shot", |c| Some(c.rejection_rate_one_shot)),
            ("derand", |c| c.rejection_rate_derand),
        ];
        for setting in &settings {
            for (stat, get) in &stats {
                if !self.cells.iter().any(|c| c.setting == *setting && get(c).is_some()) {
                    continue;
                }
                for &t in &ts {
                    let mut row = vec![setting.to_string(), stat.to_string(), t.to_string()];
                    for &n in &ns {
                        let v = self
                            .cells
                            .iter()
                            .find(|c| c.setting == *setting && c.n == n && c.t == t)
                            .and_then(get);
                        row.push(v.map(|v| v.to_string()).unwrap_or_default());
                    }
                    w.write_record(&row)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Plot-ready power curve: one row per cell.
    pub fn write_curve_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        writeln!(f, "n,t,fraction,rate_one_shot,se_one_shot,rate_derand,se_derand")?;
        for c in &self.cells {
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                c.n,
                c.t,
                opt(c.fraction),
                c.rejection_rate_one_shot,
                c.mc_std_error,
                opt(c.rejection_rate_derand),
                opt(c.mc_std_error_derand)
            )?;
        }
        Ok(())
    }

    /// Pairs of consecutive power-curve rows (same `n`, `t`) whose one-shot
    /// rate drops by more than twice the larger standard error.
    pub fn monotonicity_violations(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for w in self.cells.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.n != b.n || a.t != b.t {
                continue;
            }
            if let (Some(fa), Some(fb)) = (a.fraction, b.fraction) {
                let tol = 2.0 * a.mc_std_error.max(b.mc_std_error);
                if fb > fa && b.rejection_rate_one_shot < a.rejection_rate_one_shot - tol {
                    out.push((fa, fb));
                }
            }
        }
        out
    }
}

pub fn replication_dgp_seed(seed: u64, cell: usize, rep: usize) -> u64 {
    derive_seed(seed, &[cell as u64, rep as u64, purpose::DGP])
}

pub fn replication_test_seed(seed: u64, cell: usize, rep: usize) -> u64 {
    derive_seed(seed, &[cell as u64, rep as u64, purpose::TEST])
}

pub fn replication_derand_seed(seed: u64, cell: usize, rep: usize) -> u64 {
    derive_seed(seed, &[cell as u64, rep as u64, purpose::DERAND])
}

struct RepOutcome {
    one_shot: bool,
    derand: Option<bool>,
}

fn run_replication(spec: &ExperimentSpec, dgp: &DgpConfig, cell: usize, rep: usize) -> Result<RepOutcome> {
    let mut cfg = dgp.clone();
    cfg.seed = replication_dgp_seed(spec.seed, cell, rep);
    cfg.keep_components = false;
    let panel = generate(&cfg)?;
    let kind = estimator_for(cfg.model_kind);
    let fitted = fit(kind, &panel.returns, &panel.factors, spec.pca_k)?;
    let test = spec.test.with_seed(replication_test_seed(spec.seed, cell, rep));
    let one_shot = run_one_shot(&fitted, &test)?.reject;
    let derand = match &spec.derand {
        Some(d) => {
            let mut d = *d;
            d.master_seed = replication_derand_seed(spec.seed, cell, rep);
            Some(run_derandomized(&fitted, &test, &d)?.decision == Decision::RejectNull)
        }
        None => None,
    };
    Ok(RepOutcome { one_shot, derand })
}

fn std_error(rate: f64, m: usize) -> f64 {
    (rate * (1.0 - rate) / m as f64).sqrt()
}

fn run_cell(spec: &ExperimentSpec, cell: usize, setting: String, fraction: Option<f64>, dgp: DgpConfig) -> Result<CellResult> {
    let start = Instant::now();
    let m = spec.replications;
    let results: Vec<Result<RepOutcome>> = (0..m)
        .into_par_iter()
        .map(|rep| run_replication(spec, &dgp, cell, rep))
        .collect();
    let mut outcomes = Vec::with_capacity(m);
    for (rep, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                return Err(Error::Replication {
                    cell,
                    replication: rep,
                    seed: replication_dgp_seed(spec.seed, cell, rep),
                    source: Box::new(e),
                })
            }
        }
    }
    let rejections_one_shot = outcomes.iter().filter(|o| o.one_shot).count();
    let rejections_derand = spec
        .derand
        .map(|_| outcomes.iter().filter(|o| o.derand == Some(true)).count());
    let rate = rejections_one_shot as f64 / m as f64;
    let rate_derand = rejections_derand.map(|r| r as f64 / m as f64);
    let wall = start.elapsed().as_secs_f64();
    info!(
        "cell {cell} (N={}, T={}, {setting}): one-shot {rate:.4}{} in {wall:.2}s",
        dgp.n,
        dgp.t,
        rate_derand.map(|r| format!(", derand {r:.4}")).unwrap_or_default()
    );
    Ok(CellResult {
        n: dgp.n,
        t: dgp.t,
        setting,
        fraction,
        estimator: estimator_for(dgp.model_kind),
        replications: m,
        rejections_one_shot,
        rejection_rate_one_shot: rate,
        rejections_derand,
        rejection_rate_derand: rate_derand,
        mc_std_error: std_error(rate, m),
        mc_std_error_derand: rate_derand.map(|r| std_error(r, m)),
        wall_time_secs: wall,
    })
}

fn setting_label(scheme: AlphaScheme) -> String {
    match scheme {
        AlphaScheme::Null => "null".into(),
        AlphaScheme::SparseNormal { fraction } => format!("alternative_{fraction}"),
    }
}

fn cell_config(spec: &ExperimentSpec, g: GridPoint) -> DgpConfig {
    let mut d = spec.dgp.clone();
    d.n = g.n;
    d.t = g.t;
    d
}

/// Rejection frequencies of every grid cell under the template's alpha
/// scheme. Runs on the current rayon pool; the first failing replication (by
/// cell, then replication index) aborts the run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let label = setting_label(spec.dgp.alpha_scheme);
    let mut cells = Vec::with_capacity(spec.grid.len());
    for (c, g) in spec.grid.iter().enumerate() {
        cells.push(run_cell(spec, c, label.clone(), None, cell_config(spec, *g))?);
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        cells,
    })
}

/// One row per grid cell and mispricing fraction (fraction 0 means the null).
pub fn power_curve(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut fractions = match &spec.power_fractions {
        Some(f) if !f.is_empty() => f.clone(),
        _ => return Err(Error::InvalidConfig("power_fractions must be nonempty".into())),
    };
    if spec.include_null && !fractions.contains(&0.0) {
        fractions.insert(0, 0.0);
    }
    let mut cells = Vec::new();
    for (c, g) in spec.grid.iter().enumerate() {
        for &f in &fractions {
            let mut d = cell_config(spec, *g);
            d.alpha_scheme = if f == 0.0 {
                AlphaScheme::Null
            } else {
                AlphaScheme::SparseNormal { fraction: f }
            };
            cells.push(run_cell(spec, c, format!("fraction_{f}"), Some(f), d)?);
        }
    }
    let report = ExperimentReport {
        spec: spec.clone(),
        cells,
    };
    for (a, b) in report.monotonicity_violations() {
        warn!("power curve drops between fractions {a} and {b} by more than 2 standard errors");
    }
    Ok(report)
}

/// Runs `f` on a dedicated pool of `threads` workers (`None` = available parallelism).
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t.max(1));
    }
    let pool = b
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
