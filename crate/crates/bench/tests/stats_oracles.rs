use airground_bench::stats::{self, harmonic_mean, iqr, leak_regression, median, ols, quantile};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

// Reference implementations written from the definitions, without sorting
// shortcuts or centered sums.

fn brute_harmonic(xs: &[f64]) -> f64 {
    let mut inv = 0.0;
    for x in xs {
        inv += 1.0 / x;
    }
    xs.len() as f64 / inv
}

/// k-th smallest element (0-based) by rank counting.
fn order_stat(xs: &[f64], k: usize) -> f64 {
    for &v in xs {
        let below = xs.iter().filter(|&&y| y < v).count();
        let at_or_below = xs.iter().filter(|&&y| y <= v).count();
        if below <= k && k < at_or_below {
            return v;
        }
    }
    unreachable!("every rank has an element")
}

fn brute_quantile(xs: &[f64], q: f64) -> f64 {
    let pos = q * (xs.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let (a, b) = (order_stat(xs, lo), order_stat(xs, hi));
    a + (b - a) * (pos - lo as f64)
}

/// Slope from raw sums, R² from residuals of the fitted line.
fn brute_ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sx += a;
        sy += b;
        sxx += a * a;
        sxy += a * b;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let my = sy / n;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for (a, b) in x.iter().zip(y) {
        ss_res += (b - (intercept + slope * a)).powi(2);
        ss_tot += (b - my).powi(2);
    }
    (slope, 1.0 - ss_res / ss_tot)
}

fn positive_series() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.5f64..200.0, 1..200)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn harmonic_matches_definition(xs in positive_series()) {
        let h = harmonic_mean(&xs).unwrap().harmonic_mean;
        prop_assert!(rel_close(h, brute_harmonic(&xs), 1e-9));
    }

    #[test]
    fn harmonic_at_most_arithmetic(xs in positive_series()) {
        let h = harmonic_mean(&xs).unwrap().harmonic_mean;
        let a = stats::mean(&xs).unwrap();
        prop_assert!(h <= a * (1.0 + 1e-12));
    }

    #[test]
    fn median_and_iqr_match_rank_counting(xs in prop::collection::vec(-1e3f64..1e3, 1..120)) {
        prop_assert!(rel_close(median(&xs).unwrap(), brute_quantile(&xs, 0.5), 1e-9));
        let brute_iqr = brute_quantile(&xs, 0.75) - brute_quantile(&xs, 0.25);
        prop_assert!((iqr(&xs).unwrap() - brute_iqr).abs() <= 1e-9 * brute_iqr.abs().max(1.0));
        for q in [0.0, 0.1, 0.9, 1.0] {
            prop_assert!(rel_close(quantile(&xs, q).unwrap(), brute_quantile(&xs, q), 1e-9));
        }
    }

    #[test]
    fn ols_matches_raw_sums(
        slope in -5.0f64..5.0,
        intercept in -100.0f64..100.0,
        noise in prop::collection::vec(-10.0f64..10.0, 5..150),
    ) {
        let x: Vec<f64> = (1..=noise.len()).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| intercept + slope * a + e).collect();
        let r = ols(&x, &y).unwrap();
        let (bs, br2) = brute_ols(&x, &y);
        prop_assert!(rel_close(r.slope, bs, 1e-9), "{} vs {}", r.slope, bs);
        prop_assert!((r.r_squared - br2).abs() <= 1e-9 * br2.abs().max(1e-3), "{} vs {}", r.r_squared, br2);
    }
}

#[test]
fn rate_example_is_exact() {
    assert_eq!(harmonic_mean(&[20.0, 20.0, 10.0]).unwrap().harmonic_mean, 15.0);
    assert_eq!(harmonic_mean(&[20.0, 20.0, 20.0]).unwrap().harmonic_mean, 20.0);
}

/// Series built from a known line plus noise that is exactly centered and
/// uncorrelated with the cycle index, scaled so the population R² is the
/// target. The estimator must return the generating parameters.
fn synthetic_leak(n: usize, slope: f64, r2: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (1..=n).map(|i| i as f64).collect();
    let mx = x.iter().sum::<f64>() / n as f64;
    let mut e: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let me = e.iter().sum::<f64>() / n as f64;
    e.iter_mut().for_each(|v| *v -= me);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxe: f64 = x.iter().zip(&e).map(|(a, v)| (a - mx) * v).sum();
    for (v, a) in e.iter_mut().zip(&x) {
        *v -= sxe / sxx * (a - mx);
    }
    // R² = explained / (explained + residual).
    let explained = slope * slope * sxx;
    let want_res = explained * (1.0 - r2) / r2;
    let have_res: f64 = e.iter().map(|v| v * v).sum();
    let k = (want_res / have_res).sqrt();
    x.iter().zip(&e).map(|(a, v)| 2048.0 + slope * a + k * v).collect()
}

#[test]
fn recovers_injected_leak_series() {
    for seed in 0..20 {
        let v = synthetic_leak(357, 0.49, 0.11, seed);
        let r = leak_regression(&v).unwrap();
        assert!((r.slope - 0.49).abs() <= 0.05 * 0.49, "slope {}", r.slope);
        assert!((r.r_squared - 0.11).abs() <= 0.05 * 0.11, "r2 {}", r.r_squared);
    }
}

#[test]
fn plain_noise_leak_estimate_is_unbiased() {
    // Independent noise at the same signal-to-noise ratio: single runs
    // scatter, the mean over many runs converges to the truth.
    let n = 357;
    let sxx = (n * (n * n - 1)) as f64 / 12.0;
    let sigma = (0.49f64.powi(2) * sxx * (0.89 / 0.11) / n as f64).sqrt();
    let runs = 400;
    let mut total = 0.0;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let v: Vec<f64> = (1..=n)
            .map(|i| 2048.0 + 0.49 * i as f64 + sigma * (rng.gen_range(-1.0f64..1.0) * 3f64.sqrt()))
            .collect();
        total += leak_regression(&v).unwrap().slope;
    }
    let mean_slope = total / runs as f64;
    assert!((mean_slope - 0.49).abs() <= 0.05 * 0.49, "mean slope {mean_slope}");
}
