//! `zeroalpha` command-line front end.
//!
//! Exit status: 0 when the null is retained (or a run finished), 3 when the
//! null is rejected, 1 on any error. Standard output carries the report path
//! and one summary line; diagnostics go to standard error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, LevelFilter};
use serde::{Deserialize, Serialize};

use zeroalpha::alpha_test::{run_one_shot, ExponentMode, TestConfig};
use zeroalpha::derand::{run_derandomized, Decision, DerandConfig, ThresholdRule};
use zeroalpha::estimators::fit;
use zeroalpha::harness::{power_curve, run_experiment, with_threads, ExperimentSpec};
use zeroalpha::ingest::{
    build_return_table, read_factor_csv, read_security_csv, run_rolling, write_q_series, FactorModel,
};
use zeroalpha::panel::{validate_panel, EstimatorKind, FactorPanel};

const EXIT_REJECT: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "zeroalpha", version, about = "Zero-alpha tests for linear factor models with many assets")]
struct Cli {
    /// Master seed (overrides the seed in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON config for the subcommand; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "warn")]
    log_level: LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a return panel for zero alphas.
    Test(TestArgs),
    /// Monte Carlo rejection frequencies from an experiment spec.
    Simulate(SpecArgs),
    /// Power curve over mispricing fractions from an experiment spec.
    PowerCurve(SpecArgs),
    /// Rolling-window de-randomized test on an empirical panel.
    Rolling(RollingArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    OneShot,
    Derand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum EstimatorArg {
    Ols,
    Fm,
    Pca,
}

impl From<EstimatorArg> for EstimatorKind {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Ols => EstimatorKind::Ols,
            EstimatorArg::Fm => EstimatorKind::FamaMacBeth,
            EstimatorArg::Pca => EstimatorKind::Pca,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum ThresholdArg {
    Fb,
    Lil,
}

impl From<ThresholdArg> for ThresholdRule {
    fn from(t: ThresholdArg) -> Self {
        match t {
            ThresholdArg::Fb => ThresholdRule::FofB,
            ThresholdArg::Lil => ThresholdRule::Lil,
        }
    }
}

/// Settings shared by `test` and `rolling`; every field may come from the
/// config file or a flag, flags win.
#[derive(Args, Debug, Default, Clone)]
struct TestSettings {
    /// Moment parameter ν.
    #[arg(long)]
    nu: Option<f64>,
    /// Nominal level τ.
    #[arg(long)]
    tau: Option<f64>,
    /// Exponent δ instead of 1/ν.
    #[arg(long)]
    delta: Option<f64>,
    /// De-randomization replications (0 = round(log² N)).
    #[arg(long = "b")]
    b: Option<usize>,
    #[arg(long, value_enum)]
    threshold: Option<ThresholdArg>,
    /// Factor model: capm, ff2..ff6, or a comma-separated column list.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args, Debug, Default, Clone)]
struct TestOnly {
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Latent factors for PCA.
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Security CSV (prices or returns layout).
    #[arg(long)]
    returns: PathBuf,
    /// Factor CSV (not needed for PCA).
    #[arg(long)]
    factors: Option<PathBuf>,
    #[command(flatten)]
    settings: TestSettings,
    #[command(flatten)]
    only: TestOnly,
}

#[derive(Args, Debug)]
struct SpecArgs {
    /// Experiment spec JSON (same as --config).
    spec: Option<PathBuf>,
    /// Also write the rate tables to this CSV.
    #[arg(long)]
    tables: Option<PathBuf>,
    /// Zero the per-cell wall times so re-runs give byte-identical files.
    #[arg(long)]
    no_timings: bool,
}

#[derive(Args, Debug)]
struct RollingArgs {
    #[arg(long)]
    returns: PathBuf,
    #[arg(long)]
    factors: PathBuf,
    /// Window length in periods.
    #[arg(long)]
    window: Option<usize>,
    #[command(flatten)]
    settings: TestSettings,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TestFile {
    nu: Option<f64>,
    tau: Option<f64>,
    delta: Option<f64>,
    b: Option<usize>,
    threshold: Option<ThresholdArg>,
    model: Option<String>,
    mode: Option<Mode>,
    estimator: Option<EstimatorArg>,
    k: Option<usize>,
}

impl TestFile {
    fn settings(&self) -> TestSettings {
        TestSettings {
            nu: self.nu,
            tau: self.tau,
            delta: self.delta,
            b: self.b,
            threshold: self.threshold,
            model: self.model.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RollingFile {
    nu: Option<f64>,
    tau: Option<f64>,
    delta: Option<f64>,
    b: Option<usize>,
    threshold: Option<ThresholdArg>,
    model: Option<String>,
    window: Option<usize>,
}

impl RollingFile {
    fn settings(&self) -> TestSettings {
        TestSettings {
            nu: self.nu,
            tau: self.tau,
            delta: self.delta,
            b: self.b,
            threshold: self.threshold,
            model: self.model.clone(),
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn merge(flags: TestSettings, file: TestSettings) -> TestSettings {
    TestSettings {
        nu: flags.nu.or(file.nu),
        tau: flags.tau.or(file.tau),
        delta: flags.delta.or(file.delta),
        b: flags.b.or(file.b),
        threshold: flags.threshold.or(file.threshold),
        model: flags.model.or(file.model),
    }
}

fn test_config(s: &TestSettings, default_nu: f64, seed: u64) -> Result<TestConfig> {
    let mut cfg = TestConfig::new(s.nu.unwrap_or(default_nu), s.tau.unwrap_or(0.05), seed)?;
    if let Some(d) = s.delta {
        cfg.exponent_mode = ExponentMode::Delta(d);
    }
    Ok(cfg)
}

fn derand_config(s: &TestSettings, seed: u64) -> DerandConfig {
    DerandConfig::new(
        s.tau.unwrap_or(0.05),
        s.b.unwrap_or(0),
        s.threshold.unwrap_or(ThresholdArg::Fb).into(),
        seed,
    )
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn cmd_test(cli: &Cli, args: &TestArgs) -> Result<ExitCode> {
    let file: TestFile = match &cli.config {
        Some(p) => read_json(p)?,
        None => TestFile::default(),
    };
    let settings = merge(args.settings.clone(), file.settings());
    let mode = args.only.mode.or(file.mode).unwrap_or(Mode::Derand);
    let estimator: EstimatorKind = args.only.estimator.or(file.estimator).unwrap_or(EstimatorArg::Ols).into();
    let k = args.only.k.or(file.k).unwrap_or(3);
    let seed = cli.seed.unwrap_or(0);

    let raw = read_security_csv(&args.returns)?;
    let table = build_return_table(&raw)?;
    let returns = table.complete_panel()?;
    if returns.n_assets() < table.n_assets() {
        info!(
            "dropped {} securities with missing values",
            table.n_assets() - returns.n_assets()
        );
    }
    let factors = match (&args.factors, estimator) {
        (_, EstimatorKind::Pca) => FactorPanel::empty(returns.n_periods()),
        (Some(path), _) => {
            let ft = read_factor_csv(path)?;
            let names = match &settings.model {
                Some(m) => m.parse::<FactorModel>()?.factor_names(),
                None => ft.names.clone(),
            };
            ft.select(&names, returns.dates())?
        }
        (None, _) => bail!("--factors is required for the {estimator} estimator"),
    };
    let report = validate_panel(&returns, &factors);
    if !report.is_ok() {
        bail!("panel rejected: {report}");
    }
    let test = test_config(&settings, 5.0, seed)?;
    let fitted = with_threads(cli.threads, || fit(estimator, &returns, &factors, k))??;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("zeroalpha_test.json"));
    let reject = match mode {
        Mode::OneShot => {
            let outcome = run_one_shot(&fitted, &test)?;
            write_json(&out, &serde_json::json!({
                "mode": "one-shot",
                "n": returns.n_assets(),
                "t": returns.n_periods(),
                "outcome": outcome,
            }))?;
            println!("{}", out.display());
            println!(
                "{estimator} one-shot: Z = {:.4}, c = {:.4}, p = {:.4}, {}",
                outcome.z_max,
                outcome.critical_value,
                outcome.p_value,
                if outcome.reject { "reject" } else { "retain" }
            );
            outcome.reject
        }
        Mode::Derand => {
            let d = derand_config(&settings, seed);
            let rep = with_threads(cli.threads, || run_derandomized(&fitted, &test, &d))??;
            write_json(&out, &serde_json::json!({
                "mode": "derand",
                "estimator": estimator,
                "n": returns.n_assets(),
                "t": returns.n_periods(),
                "nu": test.nu,
                "report": rep,
            }))?;
            println!("{}", out.display());
            println!(
                "{estimator} de-randomized: Q = {:.4}, threshold = {:.4}, B = {}, {}",
                rep.q_value,
                rep.threshold_value,
                rep.b_used,
                if rep.decision == Decision::RejectNull { "reject" } else { "retain" }
            );
            rep.decision == Decision::RejectNull
        }
    };
    Ok(if reject { ExitCode::from(EXIT_REJECT) } else { ExitCode::SUCCESS })
}

fn load_spec(cli: &Cli, args: &SpecArgs) -> Result<ExperimentSpec> {
    let path = match (&args.spec, &cli.config) {
        (Some(p), _) | (None, Some(p)) => p,
        (None, None) => bail!("an experiment spec is required (positional or --config)"),
    };
    let mut spec: ExperimentSpec = read_json(path)?;
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_simulate(cli: &Cli, args: &SpecArgs) -> Result<ExitCode> {
    let spec = load_spec(cli, args)?;
    let mut report = with_threads(cli.threads, || run_experiment(&spec))??;
    if args.no_timings {
        report = report.without_timings();
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("experiment.json"));
    report.write_json(&out)?;
    if let Some(t) = &args.tables {
        report.write_tables_csv(t)?;
    }
    println!("{}", out.display());
    let summary: Vec<String> = report
        .cells
        .iter()
        .map(|c| format!("N={} T={} rate={:.4}", c.n, c.t, c.rejection_rate_one_shot))
        .collect();
    println!("{} cells: {}", report.cells.len(), summary.join("; "));
    Ok(ExitCode::SUCCESS)
}

fn cmd_power_curve(cli: &Cli, args: &SpecArgs) -> Result<ExitCode> {
    let spec = load_spec(cli, args)?;
    let mut report = with_threads(cli.threads, || power_curve(&spec))??;
    if args.no_timings {
        report = report.without_timings();
    }
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("power_curve.csv"));
    report.write_curve_csv(&out)?;
    if let Some(t) = &args.tables {
        report.write_tables_csv(t)?;
    }
    println!("{}", out.display());
    let violations = report.monotonicity_violations();
    println!(
        "{} points, {} monotonicity violations beyond 2 SE",
        report.cells.len(),
        violations.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_rolling(cli: &Cli, args: &RollingArgs) -> Result<ExitCode> {
    let file: RollingFile = match &cli.config {
        Some(p) => read_json(p)?,
        None => RollingFile::default(),
    };
    let settings = merge(args.settings.clone(), file.settings());
    let window = args.window.or(file.window).unwrap_or(60);
    let seed = cli.seed.unwrap_or(0);
    let model: FactorModel = settings.model.as_deref().unwrap_or("ff3").parse()?;

    let table = build_return_table(&read_security_csv(&args.returns)?)?;
    let ft = read_factor_csv(&args.factors)?;
    let factors = ft.select(&model.factor_names(), &table.dates)?;
    let test = test_config(&settings, 4.0, seed)?;
    let d = derand_config(&settings, seed);
    let result = with_threads(cli.threads, || run_rolling(&table, &factors, window, &test, &d, &model))??;
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("q_series.csv"));
    write_q_series(&result, None, &out)?;
    println!("{}", out.display());
    println!(
        "{model}: {} windows of {window} periods, {} rejections",
        result.len(),
        result.rejections()
    );
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .target(env_logger::Target::Stderr)
        .init();
    let result = match &cli.command {
        Command::Test(a) => cmd_test(&cli, a),
        Command::Simulate(a) => cmd_simulate(&cli, a),
        Command::PowerCurve(a) => cmd_power_curve(&cli, a),
        Command::Rolling(a) => cmd_rolling(&cli, a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
