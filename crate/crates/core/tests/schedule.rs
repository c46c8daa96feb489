mod common;

use diffbc::diffusion::{forward_noise, SigmaKind, VarianceSchedule};
use diffbc::rng::seeded;
use rand::Rng;
use rand_distr::StandardNormal;

/// Double-double running product: an independent high-precision oracle.
fn dd_product(factors: impl Iterator<Item = f64>) -> f64 {
    let (mut hi, mut lo) = (1.0f64, 0.0f64);
    for f in factors {
        let p = hi * f;
        let err = hi.mul_add(f, -p);
        let s = p + (err + lo * f);
        lo = (err + lo * f) - (s - p);
        hi = s;
    }
    hi + lo
}

fn linear_betas(steps: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..steps)
        .map(|i| if steps == 1 { lo } else { lo + (hi - lo) * i as f64 / (steps - 1) as f64 })
        .collect()
}

#[test]
fn alpha_bar_matches_high_precision_products() {
    for steps in [1, 20, 50] {
        let s = VarianceSchedule::linear(steps, 1e-4, 0.02).unwrap();
        let betas = linear_betas(steps, 1e-4, 0.02);
        for tau in 1..=steps {
            assert!((s.beta(tau) - betas[tau - 1]).abs() < 1e-18);
            let want = dd_product(betas[..tau].iter().map(|b| 1.0 - b));
            assert!((s.alpha_bar(tau) - want).abs() < 1e-12, "T={steps} tau={tau}");
        }
    }
}

#[test]
fn schedule_is_monotone_and_sigma_kinds_differ() {
    let s = VarianceSchedule::linear(50, 1e-4, 0.02).unwrap();
    assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
    assert!((s.alpha_bar(50) - 0.6).abs() < 0.01);
    let p = VarianceSchedule::linear_with_sigma(50, 1e-4, 0.02, SigmaKind::PosteriorBeta).unwrap();
    for tau in 2..=50 {
        assert!(p.sigma(tau) < s.sigma(tau));
    }
}

#[test]
fn invalid_schedules_are_rejected() {
    assert!(VarianceSchedule::linear(0, 1e-4, 0.02).is_err());
    assert!(VarianceSchedule::linear(10, 0.0, 0.02).is_err());
    assert!(VarianceSchedule::linear(10, 0.02, 1e-4).is_err());
    assert!(VarianceSchedule::linear(10, 1e-4, 1.0).is_err());
}

#[test]
fn forward_noise_moments() {
    let a = [0.8, -0.5, 0.3];
    let mut rng = seeded(17);
    for (steps, tau) in [(1, 1), (20, 10), (50, 50)] {
        let s = VarianceSchedule::linear(steps, 1e-4, 0.02).unwrap();
        let ab = s.alpha_bar(tau);
        let n = 100_000;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for _ in 0..n {
            let z: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            let x = forward_noise(&a, tau, &s, &z).unwrap();
            for j in 0..3 {
                sum[j] += x[j];
                sq[j] += x[j] * x[j];
            }
        }
        for j in 0..3 {
            let mean = sum[j] / n as f64;
            let var = sq[j] / n as f64 - mean * mean;
            let want_mean = ab.sqrt() * a[j];
            assert!((mean - want_mean).abs() <= 0.05 * want_mean.abs(), "mean tau={tau} j={j}");
            assert!((var - (1.0 - ab)).abs() <= 0.05 * (1.0 - ab), "var tau={tau} j={j}: {var}");
        }
    }
}
