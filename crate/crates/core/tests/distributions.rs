//! Distributional checks of the random substrate and the null law of Z.

use statrs::distribution::{ContinuousCDF, Normal};

use zeroalpha::alpha_test::{critical_value, gumbel_cdf, norming_constants};
use zeroalpha::rng::{self, perturbed_max, StreamKey};

fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

#[test]
fn gaussian_ks() {
    let mut s = StreamKey::new(2024, &[1]).stream();
    let xs = rng::gaussian(&mut s, 100_000);
    let nd = std_normal();
    let d = ks_statistic(xs, |x| nd.cdf(x));
    assert!(d <= 0.005, "KS = {d}");
}

#[test]
fn student_t_large_df_is_gaussian() {
    let mut s = StreamKey::new(2024, &[2]).stream();
    let xs = rng::student_t(&mut s, 1e6, 100_000).unwrap();
    let nd = std_normal();
    let d = ks_statistic(xs, |x| nd.cdf(x));
    assert!(d <= 0.01, "KS = {d}");
}

#[test]
fn student_t_matches_its_cdf() {
    let mut s = StreamKey::new(2024, &[3]).stream();
    let xs = rng::student_t(&mut s, 5.5, 100_000).unwrap();
    let td = statrs::distribution::StudentsT::new(0.0, 1.0, 5.5).unwrap();
    let d = ks_statistic(xs, |x| td.cdf(x));
    assert!(d <= 0.005, "KS = {d}");
}

#[test]
fn sibling_streams_uncorrelated() {
    let root = StreamKey::new(99, &[]);
    let a = rng::gaussian(&mut root.child(1).child(5).stream(), 100_000);
    let b = rng::gaussian(&mut root.child(1).child(6).stream(), 100_000);
    let r: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / 100_000.0;
    assert!(r.abs() <= 0.01, "{r}");
    assert_ne!(root.child(1).child(5).key(), root.child(1).child(6).key());
}

/// Exact law of the max of N standard normals on the Gumbel scale.
fn finite_n_cdf(n: usize, x: f64) -> f64 {
    let (a, b) = norming_constants::<f64>(n).unwrap();
    let p = std_normal().cdf(a * x + b);
    (n as f64 * p.ln()).exp()
}

fn normalized_null_maxima(n: usize, seeds: u64) -> Vec<f64> {
    let (a, b) = norming_constants::<f64>(n).unwrap();
    (0..seeds)
        .map(|s| (perturbed_max(s, n, |_| 0.0).0 - b) / a)
        .collect()
}

#[test]
fn null_maximum_matches_exact_finite_n_law() {
    let xs = normalized_null_maxima(5000, 10_000);
    let d = ks_statistic(xs, |x| finite_n_cdf(5000, x));
    assert!(d <= 0.02, "KS vs exact law = {d}");
}

/// Literal form against the Gumbel limit. At N = 5000 the exact law itself
/// sits 0.030 (sup norm) from the limit, so a 0.02 bound cannot hold for a
/// correct sampler.
#[test]
#[ignore = "the exact finite-N law is 0.030 from the Gumbel limit at N = 5000"]
fn null_maximum_matches_gumbel_limit() {
    let xs = normalized_null_maxima(5000, 10_000);
    let d = ks_statistic(xs, gumbel_cdf::<f64>);
    assert!(d <= 0.02, "KS vs Gumbel = {d}");
}

#[test]
fn finite_n_law_is_far_from_limit() {
    let gap = (-400..=1200)
        .map(|i| i as f64 / 100.0)
        .map(|x| (finite_n_cdf(5000, x) - gumbel_cdf(x)).abs())
        .fold(0.0f64, f64::max);
    assert!(gap > 0.029 && gap < 0.032, "{gap}");
}

#[test]
fn null_rejection_frequency_n500() {
    let n = 500;
    let c = critical_value::<f64>(n, 0.05).unwrap();
    let seeds = 100_000u64;
    let rejections = (0..seeds).filter(|&s| perturbed_max(s, n, |_| 0.0).0 > c).count();
    let rate = rejections as f64 / seeds as f64;
    let exact = 1.0 - (n as f64 * std_normal().cdf(c).ln()).exp();
    let se = (exact * (1.0 - exact) / seeds as f64).sqrt();
    assert!((exact - 0.032687).abs() < 1e-5);
    assert!((rate - exact).abs() <= 3.0 * se, "rate {rate}, exact {exact}, se {se}");
}
