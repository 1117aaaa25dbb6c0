//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p zeroalpha --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use statrs::distribution::{ContinuousCDF, Normal};

use common::{fm_oracle, max_rel_gap, ols_oracle, panel};
use zeroalpha::alpha_test::{compute_psi, critical_value, evaluate_psi, TestConfig};
use zeroalpha::derand::{derandomize_psi, run_derandomized, Decision, DerandConfig, ThresholdRule};
use zeroalpha::dgp::{generate, AlphaScheme, DgpConfig};
use zeroalpha::estimators::{fit, fit_fama_macbeth, fit_ols, fit_pca};
use zeroalpha::harness::{run_experiment, with_threads, ExperimentSpec, GridPoint};
use zeroalpha::ingest::{run_rolling, FactorModel, ReturnTable};
use zeroalpha::linalg::Matrix;
use zeroalpha::{EstimatorKind, FactorPanel, ReturnPanel};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// `1 − Φ(c_τ)^N`: exact one-shot null rejection probability with ψ ≡ 0.
fn exact_null_rate(n: usize, tau: f64) -> f64 {
    let c = critical_value::<f64>(n, tau).unwrap();
    let phi = Normal::new(0.0, 1.0).unwrap().cdf(c);
    1.0 - (n as f64 * phi.ln()).exp()
}

fn binomial_se(p: f64, m: usize) -> f64 {
    (p * (1.0 - p) / m as f64).sqrt()
}

/// One-shot rejection frequency of the ψ ≡ 0 test over seeds `0..seeds`.
fn null_rate(n: usize, seeds: u64) -> f64 {
    let cfg = TestConfig::new(5.0, 0.05, 0).unwrap();
    let hits = (0..seeds)
        .filter(|&s| evaluate_psi(vec![0.0f64; n], EstimatorKind::Ols, &cfg.with_seed(s)).unwrap().reject)
        .count();
    hits as f64 / seeds as f64
}

fn within_budget(elapsed: Duration, budget_secs: f64) -> Check {
    let s = elapsed.as_secs_f64();
    ensure(s < budget_secs, format!("{s:.1}s of {budget_secs:.0}s"))
}

fn c1_gumbel_null_oracle() -> Check {
    let start = Instant::now();
    let (n, m) = (500, 20_000);
    let rate = null_rate(n, m as u64);
    let exact = exact_null_rate(n, 0.05);
    let se = binomial_se(exact, m);
    let time = within_budget(start.elapsed(), 30.0)?;
    ensure(
        (rate - exact).abs() <= 3.0 * se,
        format!("rate {rate:.5}, exact {exact:.5}, 3 SE {:.5}, {time}", 3.0 * se),
    )
}

fn c2_calibration_trend() -> Check {
    let start = Instant::now();
    let m = 100_000usize;
    let mut gaps = Vec::new();
    let mut parts = Vec::new();
    for n in [100, 1000, 10_000] {
        let rate = null_rate(n, m as u64);
        let exact = exact_null_rate(n, 0.05);
        let se = binomial_se(exact, m);
        parts.push(format!("N={n}: {rate:.5} vs {exact:.5}"));
        if (rate - exact).abs() > 3.0 * se {
            return Err(format!("N={n}: rate {rate:.5} outside 3 SE of {exact:.5}"));
        }
        gaps.push((rate - 0.05).abs());
    }
    let time = within_budget(start.elapsed(), 120.0)?;
    ensure(
        gaps.windows(2).all(|w| w[1] < w[0]),
        format!("{}; |rate - tau| {gaps:.4?}, {time}", parts.join(", ")),
    )
}

fn size_spec(dgp: DgpConfig, m: usize, seed: u64) -> ExperimentSpec {
    let grid = vec![GridPoint { n: dgp.n, t: dgp.t }];
    ExperimentSpec::new(dgp, grid, m, TestConfig::new(5.0, 0.05, 0).unwrap(), seed)
}

fn c3_size_gaussian() -> Check {
    let start = Instant::now();
    let report = run_experiment(&size_spec(DgpConfig::baseline(100, 200, 0), 500, 3)).map_err(|e| e.to_string())?;
    let rate = report.cells[0].rejection_rate_one_shot;
    let time = within_budget(start.elapsed(), 300.0)?;
    ensure(rate <= 0.08, format!("rejection rate {rate:.4} (bound 0.08), {time}"))
}

fn c4_power_sparse() -> Check {
    let start = Instant::now();
    let mut dgp = DgpConfig::baseline(200, 200, 0);
    dgp.alpha_scheme = AlphaScheme::SparseNormal { fraction: 0.05 };
    let report = run_experiment(&size_spec(dgp, 300, 4)).map_err(|e| e.to_string())?;
    let rate = report.cells[0].rejection_rate_one_shot;
    let time = within_budget(start.elapsed(), 300.0)?;
    ensure(rate >= 0.95, format!("rejection rate {rate:.4} (bound 0.95), {time}"))
}

fn c5_derand_null() -> Check {
    let start = Instant::now();
    let (n, seeds) = (500, 200u64);
    let psi = vec![0.0f64; n];
    let mut qs = Vec::new();
    let mut retained = 0;
    for s in 0..seeds {
        let r = derandomize_psi(&psi, &DerandConfig::new(0.05, 39, ThresholdRule::FofB, s)).map_err(|e| e.to_string())?;
        retained += usize::from(r.decision == Decision::RetainNull);
        qs.push(r.q_value);
    }
    let mean = qs.iter().sum::<f64>() / seeds as f64;
    let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (seeds as f64 - 1.0);
    let se = (var / seeds as f64).sqrt();
    let target = 1.0 - exact_null_rate(n, 0.05);
    let share = retained as f64 / seeds as f64;
    let time = within_budget(start.elapsed(), 120.0)?;
    ensure(
        (mean - target).abs() <= 3.0 * se && share >= 0.95,
        format!("mean Q {mean:.5} vs {target:.5} (3 SE {:.5}), retained {share:.3}, {time}", 3.0 * se),
    )
}

fn c6_derand_alternative() -> Check {
    let start = Instant::now();
    let mut psi = vec![0.0f64; 500];
    psi[17] = 100.0;
    let mut dgp = DgpConfig::baseline(100, 200, 6);
    dgp.alpha_overrides = vec![(3, 1e3)];
    let p = generate(&dgp).map_err(|e| e.to_string())?;
    let fitted = fit_ols(&p.returns, &p.factors).map_err(|e| e.to_string())?;
    let test = TestConfig::new(5.0, 0.05, 0).unwrap();
    let fit_max = compute_psi(&fitted, &test, 200, 100)
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(0.0f64, f64::max);
    if fit_max < 100.0 {
        return Err(format!("planted fit reached max psi {fit_max:.1} only"));
    }
    let mut failures = 0;
    for s in 0..1000u64 {
        let cfg = DerandConfig::new(0.05, 0, ThresholdRule::FofB, s);
        let a = derandomize_psi(&psi, &cfg).map_err(|e| e.to_string())?;
        let b = run_derandomized(&fitted, &test, &cfg).map_err(|e| e.to_string())?;
        for r in [a, b] {
            if r.q_value != 0.0 || r.decision != Decision::RejectNull {
                failures += 1;
            }
        }
    }
    let time = within_budget(start.elapsed(), 10.0)?;
    ensure(
        failures == 0,
        format!("{failures} of 2000 runs missed Q = 0 / reject (fit max psi {fit_max:.0}), {time}"),
    )
}

fn c7_estimator_oracles() -> Check {
    let start = Instant::now();
    let mut worst_ols = 0.0f64;
    let mut worst_fm = 0.0f64;
    let mut worst_orth = 0.0f64;
    let mut worst_eig = 0.0f64;
    for case in 0..50u64 {
        let n = 5 + (case as usize * 7) % 16;
        let t = 30 + (case as usize * 13) % 71;
        let k = 1 + case as usize % 3;
        let (r, f) = panel(n, t, k, 1000 + case);
        let (a_ols, _) = ols_oracle(&r, &f);
        worst_ols = worst_ols.max(max_rel_gap(&fit_ols(&r, &f).map_err(|e| e.to_string())?.alphas, &a_ols));
        let (a_fm, _) = fm_oracle(&r, &f);
        let fm = fit_fama_macbeth(&r, &f).map_err(|e| e.to_string())?;
        worst_fm = worst_fm.max(max_rel_gap(&fm.alphas, &a_fm));

        let pc = fit_pca(&r, k).map_err(|e| e.to_string())?;
        let b = &pc.betas;
        let btb = b.transpose().matmul(b).map_err(|e| e.to_string())?;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                worst_orth = worst_orth.max((btb[(i, j)] / n as f64 - target).abs());
            }
        }
        worst_eig = worst_eig.max(eigen_residual(&r, b)?);
    }
    let time = within_budget(start.elapsed(), 60.0)?;
    ensure(
        worst_ols <= 1e-10 && worst_fm <= 1e-10 && worst_orth <= 1e-10 && worst_eig <= 1e-8,
        format!(
            "OLS {worst_ols:.1e}, FM {worst_fm:.1e}, B'B/N - I {worst_orth:.1e}, eigen residual {worst_eig:.1e}, {time}"
        ),
    )
}

/// Relative residual of `S v = λ v` for the loading columns, `S = Y Y' / (N T)`
/// on demeaned returns and `v = β/√N`.
fn eigen_residual(r: &ReturnPanel<f64>, betas: &Matrix<f64>) -> Result<f64, String> {
    let (n, t) = r.returns().shape();
    let mut y = r.returns().clone();
    for i in 0..n {
        let mean = y.row(i).iter().sum::<f64>() / t as f64;
        for s in 0..t {
            y[(i, s)] -= mean;
        }
    }
    let s = y.matmul(&y.transpose()).map_err(|e| e.to_string())?;
    let scale = (n * t) as f64;
    let mut worst = 0.0f64;
    for p in 0..betas.cols() {
        let v: Vec<f64> = (0..n).map(|i| betas[(i, p)] / (n as f64).sqrt()).collect();
        let sv: Vec<f64> = (0..n).map(|i| (0..n).map(|j| s[(i, j)] * v[j]).sum::<f64>() / scale).collect();
        let lambda: f64 = sv.iter().zip(&v).map(|(a, b)| a * b).sum();
        let res = sv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(res / lambda.abs().max(1e-300));
    }
    Ok(worst)
}

fn c8_scale_invariance() -> Check {
    let start = Instant::now();
    let cfg = TestConfig::new(5.0, 0.05, 0).unwrap();
    let mut worst = 0.0f64;
    for (est, dgp) in [
        (EstimatorKind::Ols, DgpConfig::baseline(60, 120, 8)),
        (EstimatorKind::FamaMacBeth, DgpConfig::non_tradable(60, 120, 8)),
        (EstimatorKind::Pca, DgpConfig::latent(60, 120, 8)),
    ] {
        let mut dgp = dgp;
        dgp.alpha_scheme = AlphaScheme::SparseNormal { fraction: 0.1 };
        let p = generate(&dgp).map_err(|e| e.to_string())?;
        let base = fit(est, &p.returns, &p.factors, 3).map_err(|e| e.to_string())?;
        let psi = compute_psi(&base, &cfg, 120, 60).map_err(|e| e.to_string())?;
        for c in [0.01, 100.0] {
            let scaled = fit(est, &p.returns.scaled(c), &p.factors, 3).map_err(|e| e.to_string())?;
            let other = compute_psi(&scaled, &cfg, 120, 60).map_err(|e| e.to_string())?;
            for (x, y) in psi.iter().zip(&other) {
                worst = worst.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    let time = within_budget(start.elapsed(), 10.0)?;
    ensure(worst <= 1e-12, format!("largest psi change {worst:.1e}, {time}"))
}

fn c9_fm_pca_size() -> Check {
    let start = Instant::now();
    let fm = run_experiment(&size_spec(DgpConfig::non_tradable(100, 200, 0), 300, 9)).map_err(|e| e.to_string())?;
    let pc = run_experiment(&size_spec(DgpConfig::latent(100, 200, 0), 300, 9)).map_err(|e| e.to_string())?;
    let (a, b) = (fm.cells[0].rejection_rate_one_shot, pc.cells[0].rejection_rate_one_shot);
    let time = within_budget(start.elapsed(), 600.0)?;
    ensure(
        a <= 0.09 && b <= 0.10,
        format!("FM {a:.4} (bound 0.09), PCA {b:.4} (bound 0.10), {time}"),
    )
}

fn c10_parallel_equivalence() -> Check {
    let start = Instant::now();
    let mut spec = ExperimentSpec::new(
        DgpConfig::baseline(0, 0, 0),
        vec![GridPoint { n: 40, t: 60 }, GridPoint { n: 80, t: 100 }],
        40,
        TestConfig::new(5.0, 0.05, 0).unwrap(),
        10,
    );
    spec.dgp.n = 40;
    spec.dgp.t = 60;
    spec.dgp.alpha_scheme = AlphaScheme::SparseNormal { fraction: 0.05 };
    spec.derand = Some(DerandConfig::new(0.05, 0, ThresholdRule::FofB, 0));
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4);
    let run = |threads| {
        with_threads(Some(threads), || run_experiment(&spec).and_then(|r| r.canonical_json()))
            .and_then(|r| r)
            .map_err(|e| e.to_string())
    };
    let one = run(1)?;
    let many = run(workers)?;
    let time = within_budget(start.elapsed(), 120.0)?;
    ensure(
        one == many,
        format!("1 vs {workers} workers, {} bytes of JSON, {time}", one.len()),
    )
}

fn c11_rolling() -> Check {
    let start = Instant::now();
    let (n, t, window) = (100, 200, 60);
    let p = generate(&DgpConfig::baseline(n, t, 11)).map_err(|e| e.to_string())?;
    // Months 61..=120 are indices 60..120; every tenth asset is mispriced there.
    let mut y = p.returns.returns().clone();
    for i in (0..n).step_by(10) {
        for s in 60..120 {
            y[(i, s)] += 2.0;
        }
    }
    let dates: Vec<String> = (1..=t).map(|m| m.to_string()).collect();
    let assets: Vec<String> = (0..n).map(|i| format!("a{i}")).collect();
    let returns = ReturnPanel::new(assets, dates, y).map_err(|e| e.to_string())?;
    let names = ["MKT", "SMB", "HML"].map(String::from).to_vec();
    let factors = FactorPanel::new(names, p.factors.values().clone()).map_err(|e| e.to_string())?;
    let test = TestConfig::new(4.0, 0.05, 0).unwrap();
    let derand = DerandConfig::new(0.05, 0, ThresholdRule::FofB, 11);
    let result = run_rolling(&ReturnTable::from_panel(&returns), &factors, window, &test, &derand, &FactorModel::Ff3)
        .map_err(|e| e.to_string())?;

    let (mut inside, mut inside_rej, mut outside, mut outside_ret) = (0, 0, 0, 0);
    for w in 0..result.len() {
        let (first, last) = (w, w + window - 1);
        let rejected = result.decisions[w] == Decision::RejectNull;
        if first >= 60 && last < 120 {
            inside += 1;
            inside_rej += usize::from(rejected);
        } else if last < 60 || first >= 120 {
            outside += 1;
            outside_ret += usize::from(!rejected);
        }
    }
    let share = outside_ret as f64 / outside as f64;
    let time = within_budget(start.elapsed(), 120.0)?;
    ensure(
        inside > 0 && inside_rej == inside && share >= 0.9,
        format!("inside rejected {inside_rej}/{inside}, outside retained {outside_ret}/{outside}, {time}"),
    )
}

fn c12_performance() -> Check {
    let start = Instant::now();
    let report = run_experiment(&size_spec(DgpConfig::baseline(500, 500, 0), 100, 12)).map_err(|e| e.to_string())?;
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let time = within_budget(start.elapsed(), 60.0)?;
    Ok(format!(
        "N=500, T=500, M=100 on {cores} core(s), rate {:.2}, {time}",
        report.cells[0].rejection_rate_one_shot
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("exact Gumbel null oracle, N=500", c1_gumbel_null_oracle),
        ("calibration trend in N", c2_calibration_trend),
        ("size, Gaussian DGP", c3_size_gaussian),
        ("power, sparse alternative", c4_power_sparse),
        ("de-randomized null", c5_derand_null),
        ("de-randomized alternative", c6_derand_alternative),
        ("estimator oracles", c7_estimator_oracles),
        ("scale invariance", c8_scale_invariance),
        ("FM/PCA size", c9_fm_pca_size),
        ("parallel equivalence", c10_parallel_equivalence),
        ("rolling pipeline", c11_rolling),
        ("performance", c12_performance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS criterion {:>2} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} ({name}): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
