//! Library values against independently computed references: closed forms,
//! brute-force grids, Monte Carlo, and constants frozen from a 30-digit
//! mpmath evaluation.

mod common;

use bai::action::{optimal_action_probabilities, DEFAULT_TOL as ACTION_TOL};
use bai::allocation::{optimal_allocation, solve_beta, DEFAULT_TOL};
use bai::bandit::{kl_bernoulli, presets, RewardFamily, RngStream};
use bai::posterior::{PosteriorSampler, PosteriorState};
use bai::stopping::{chernoff_threshold, ln_bayes_complement, ThresholdVariant};
use bai::transport::transportation_cost;

use common::{beta_prob_greater, gaussian_action_probabilities_midpoint};

#[test]
fn beta_oracle_reproduces_a_known_value() {
    // P(Beta(3,2) > Beta(2,4)) = 5/6 by direct numerical integration
    let p = beta_prob_greater(3, 2, 2, 4);
    // the sum goes through ln_gamma, good to about 1e-14
    assert!((p - 5.0 / 6.0).abs() < 1e-12, "{p:e}");
    // symmetric case
    assert!((beta_prob_greater(4, 4, 4, 4) - 0.5).abs() < 1e-12);
}

#[test]
fn two_bernoulli_arms_match_the_exact_beta_sum() {
    for (s0, f0, s1, f1) in [(0, 0, 0, 0), (3, 1, 1, 3), (7, 2, 5, 5), (20, 30, 25, 25), (1, 9, 0, 4)] {
        let state = PosteriorState::from_counts(
            RewardFamily::Bernoulli,
            vec![s0 + f0, s1 + f1],
            vec![s0 as f64, s1 as f64],
        )
        .unwrap();
        let a = optimal_action_probabilities(&state, ACTION_TOL).unwrap();
        let exact = beta_prob_greater(s0 + 1, f0 + 1, s1 + 1, f1 + 1);
        assert!((a.probs[0] - exact).abs() < 1e-9, "{:?}: {} vs {exact}", (s0, f0, s1, f1), a.probs[0]);
    }
}

#[test]
fn three_gaussian_arms_match_a_midpoint_double_integral() {
    let counts = vec![8u64, 5, 12];
    let means = [0.3, 0.1, 0.25];
    let sums = counts.iter().zip(&means).map(|(&t, &m)| t as f64 * m).collect();
    let state = PosteriorState::from_counts(RewardFamily::gaussian(1.0).unwrap(), counts.clone(), sums).unwrap();
    let params: Vec<(f64, f64)> = counts.iter().zip(&means).map(|(&t, &m)| (m, 1.0 / (t as f64).sqrt())).collect();
    let oracle = gaussian_action_probabilities_midpoint(&params, 200_000);
    let a = optimal_action_probabilities(&state, ACTION_TOL).unwrap();
    for (p, q) in a.probs.iter().zip(&oracle) {
        assert!((p - q).abs() < 1e-8, "{p} vs {q}");
    }
}

#[test]
fn action_probabilities_match_argmax_frequencies() {
    let counts = vec![10u64, 12, 8, 15];
    let sums = vec![5.0, 4.8, 3.6, 3.0];
    let state = PosteriorState::from_counts(RewardFamily::gaussian(1.0).unwrap(), counts, sums).unwrap();
    let a = optimal_action_probabilities(&state, ACTION_TOL).unwrap();
    let sampler = PosteriorSampler::new(&state).unwrap();
    let mut rng = RngStream::new(17, 0).rng();
    let n = 1_000_000;
    let mut freq = [0usize; 4];
    let mut scratch = [0.0; 4];
    for _ in 0..n {
        freq[sampler.sample_argmax(&mut scratch, &mut rng)] += 1;
    }
    for (i, &f) in freq.iter().enumerate() {
        let p = a.probs[i];
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        assert!((f as f64 / n as f64 - p).abs() < 4.0 * sd, "arm {i}: {} vs {p}", f as f64 / n as f64);
    }
}

#[test]
fn beta_star_beats_every_point_of_a_fine_grid() {
    let family = RewardFamily::gaussian(1.0).unwrap();
    for means in [&presets::MU1[..], &presets::MU2[..], &[0.9, 0.5, 0.1][..]] {
        let best = optimal_allocation(means, family, 1e-10).unwrap();
        let grid_best = (1..1000)
            .map(|k| solve_beta(means, family, k as f64 / 1000.0, DEFAULT_TOL).unwrap().rate)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(best.rate >= grid_best - 1e-12, "{} < {grid_best}", best.rate);
    }
    let bern = [0.7, 0.5, 0.45, 0.2];
    let best = optimal_allocation(&bern, RewardFamily::Bernoulli, 1e-10).unwrap();
    let grid_best = (1..200)
        .map(|k| solve_beta(&bern, RewardFamily::Bernoulli, k as f64 / 200.0, DEFAULT_TOL).unwrap().rate)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(best.rate >= grid_best - 1e-12);
}

#[test]
fn bernoulli_cost_is_the_infimum_over_alternatives() {
    let state = PosteriorState::from_counts(RewardFamily::Bernoulli, vec![10, 20], vec![7.0, 6.0]).unwrap();
    let w = transportation_cost(&state, 0, 1).unwrap();
    // 30-digit reference
    assert!((w - 2.2010238922622064).abs() < 1e-12);
    let grid_min = (1..100_000)
        .map(|k| {
            let x = k as f64 / 100_000.0;
            10.0 * kl_bernoulli(0.7, x) + 20.0 * kl_bernoulli(0.3, x)
        })
        .fold(f64::INFINITY, f64::min);
    assert!(w <= grid_min && grid_min - w < 1e-6);
}

#[test]
fn thresholds_match_frozen_values() {
    for (n, delta, k, expect) in [
        (100, 0.01, 5, 16.795294775988778),
        (1000, 0.1, 2, 12.142251741282876),
        (10, 0.5, 2, 8.056986706381028),
    ] {
        let d = chernoff_threshold(n, delta, k).unwrap();
        assert!((d - expect).abs() < 1e-12, "{d} vs {expect}");
    }
    let t1 = ln_bayes_complement(100, 0.01, 5, ThresholdVariant::Theorem1).unwrap();
    let cf = ln_bayes_complement(100, 0.01, 5, ThresholdVariant::ClosedForm).unwrap();
    assert!((t1 - -24.00997222256572).abs() < 1e-11);
    assert!((cf - -17.46051629972643).abs() < 1e-11);
}
