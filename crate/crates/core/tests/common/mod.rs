//! Oracles shared by the integration suites. They rely on `statrs` and on
//! closed forms, never on the library's own special functions.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::ln_beta;
use statrs::function::gamma::ln_gamma;

/// `P(Z <= z)` for a standard normal.
pub fn normal_cdf(z: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(z)
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Exact `P(X > Y)` for `X ~ Beta(a, b)`, `Y ~ Beta(c, d)` with integer
/// shapes. `P(Y < x)` is a binomial tail in `x`, whose expectation under
/// `X` is a finite sum of Beta-function ratios.
pub fn beta_prob_greater(a: u64, b: u64, c: u64, d: u64) -> f64 {
    let n = c + d - 1;
    let (af, bf) = (a as f64, b as f64);
    let lb = ln_beta(af, bf);
    (c..=n)
        .map(|k| (ln_choose(n, k) + ln_beta(af + k as f64, bf + (n - k) as f64) - lb).exp())
        .sum()
}

/// `a_i = ∫ f_i Π_{j≠i} F_j` by the midpoint rule on a fine grid, for
/// Gaussian posteriors given as `(mean, sd)`.
pub fn gaussian_action_probabilities_midpoint(params: &[(f64, f64)], points: usize) -> Vec<f64> {
    let lo = params.iter().map(|&(m, s)| m - 12.0 * s).fold(f64::INFINITY, f64::min);
    let hi = params.iter().map(|&(m, s)| m + 12.0 * s).fold(f64::NEG_INFINITY, f64::max);
    let h = (hi - lo) / points as f64;
    let normal: Vec<Normal> = params.iter().map(|&(m, s)| Normal::new(m, s).unwrap()).collect();
    let mut a = vec![0.0; params.len()];
    for step in 0..points {
        let x = lo + (step as f64 + 0.5) * h;
        let cdf: Vec<f64> = normal.iter().map(|n| n.cdf(x)).collect();
        for (i, n) in normal.iter().enumerate() {
            let pdf = statrs::distribution::Continuous::pdf(n, x);
            let others: f64 = cdf.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, c)| c).product();
            a[i] += pdf * others * h;
        }
    }
    a
}
