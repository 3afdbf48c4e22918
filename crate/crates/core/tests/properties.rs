use proptest::prelude::*;

use bai::action::{optimal_action_probabilities, DEFAULT_TOL as ACTION_TOL};
use bai::allocation::{gaussian_fast_path, optimal_allocation_beta, DEFAULT_TOL};
use bai::bandit::{kl_bernoulli, RewardFamily};
use bai::posterior::PosteriorState;
use bai::rules::{selection_probabilities, SamplingRule};
use bai::special::{beta_reg, ln_beta_reg};
use bai::stopping::{chernoff_threshold, ln_bayes_complement, ThresholdVariant};
use bai::transport::{transportation_cost, CostMatrix};

fn gaussian_state() -> impl Strategy<Value = PosteriorState> {
    (2usize..=5).prop_flat_map(|k| {
        (prop::collection::vec(1u64..200, k), prop::collection::vec(-1.0f64..1.0, k)).prop_map(|(counts, means)| {
            let sums = counts.iter().zip(&means).map(|(&t, &m)| t as f64 * m).collect();
            PosteriorState::from_counts(RewardFamily::gaussian(1.0).unwrap(), counts, sums).unwrap()
        })
    })
}

fn bernoulli_state() -> impl Strategy<Value = PosteriorState> {
    (2usize..=4).prop_flat_map(|k| {
        prop::collection::vec((0u64..60, 0u64..60), k).prop_map(|arms| {
            let counts = arms.iter().map(|&(s, f)| s + f).collect();
            let sums = arms.iter().map(|&(s, _)| s as f64).collect();
            PosteriorState::from_counts(RewardFamily::Bernoulli, counts, sums).unwrap()
        })
    })
}

/// Means with a unique best arm.
fn separated_means() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..0.95, 2..=6).prop_filter("unique best", |m| {
        let top = m.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m.iter().filter(|&&x| x > top - 1e-3).count() == 1
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn update_order_does_not_matter(rewards in prop::collection::vec((0usize..3, 0u8..2), 1..60)) {
        let mut forward = PosteriorState::new(RewardFamily::Bernoulli, 3);
        let mut backward = PosteriorState::new(RewardFamily::Bernoulli, 3);
        for &(arm, r) in &rewards {
            forward.update(arm, r as f64).unwrap();
        }
        for &(arm, r) in rewards.iter().rev() {
            backward.update(arm, r as f64).unwrap();
        }
        prop_assert_eq!(forward.all_params().unwrap(), backward.all_params().unwrap());
    }

    #[test]
    fn gaussian_action_probabilities_form_a_distribution(state in gaussian_state()) {
        let a = optimal_action_probabilities(&state, ACTION_TOL).unwrap();
        prop_assert!(a.probs.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(a.normalization_defect.abs() < 1e-6);
    }

    #[test]
    fn beta_action_probabilities_form_a_distribution(state in bernoulli_state()) {
        let a = optimal_action_probabilities(&state, ACTION_TOL).unwrap();
        prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        prop_assert!(a.normalization_defect.abs() < 1e-6);
    }

    #[test]
    fn transportation_cost_signs(state in gaussian_state()) {
        let k = state.arms();
        for i in 0..k {
            for j in (0..k).filter(|&j| j != i) {
                let w = transportation_cost(&state, i, j).unwrap();
                prop_assert!(w >= 0.0);
                let (mi, mj) = (state.empirical_mean(i), state.empirical_mean(j));
                if mi <= mj {
                    prop_assert_eq!(w, 0.0);
                } else {
                    let (ti, tj) = (state.counts()[i] as f64, state.counts()[j] as f64);
                    let closed = (mi - mj).powi(2) / (2.0 * (1.0 / ti + 1.0 / tj));
                    prop_assert!((w - closed).abs() <= 1e-9 * closed.max(1.0));
                }
            }
        }
    }

    #[test]
    fn allocation_is_feasible_and_equalized(means in separated_means(), beta in 0.05f64..0.95) {
        for family in [RewardFamily::gaussian(1.0).unwrap(), RewardFamily::Bernoulli] {
            let r = optimal_allocation_beta(&means, family, beta, DEFAULT_TOL).unwrap();
            prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(r.weights.iter().all(|&w| w > 0.0));
            prop_assert_eq!(r.beta, beta);
            prop_assert!(r.residual <= 1e-9 * r.rate.max(1e-3), "{:?}: residual {:e} rate {:e}", family, r.residual, r.rate);
        }
    }

    #[test]
    fn fast_path_matches_general_solver(means in separated_means(), beta in 0.05f64..0.95) {
        let family = RewardFamily::gaussian(0.7).unwrap();
        let general = optimal_allocation_beta(&means, family, beta, DEFAULT_TOL).unwrap();
        let fast = gaussian_fast_path(&means, 0.7, beta, DEFAULT_TOL).unwrap();
        for (a, b) in fast.weights.iter().zip(&general.weights) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn thresholds_grow_with_n_and_with_confidence(n in 2u64..1_000_000, delta in 1e-6f64..0.5, k in 2usize..10) {
        let d = chernoff_threshold(n, delta, k).unwrap();
        prop_assert!(chernoff_threshold(n + 1, delta, k).unwrap() >= d);
        prop_assert!(chernoff_threshold(n, delta / 2.0, k).unwrap() > d);
        for v in [ThresholdVariant::Theorem1, ThresholdVariant::ClosedForm] {
            let l = ln_bayes_complement(n, delta, k, v).unwrap();
            prop_assert!(l < 0.0 && l.is_finite());
            prop_assert!(ln_bayes_complement(n + 1, delta, k, v).unwrap() <= l);
        }
    }

    #[test]
    fn selection_probabilities_form_a_distribution(state in gaussian_state(), beta in 0.05f64..0.95) {
        let a = optimal_action_probabilities(&state, ACTION_TOL).unwrap();
        let w = CostMatrix::new(&state).unwrap();
        for rule in [SamplingRule::Ttts { beta }, SamplingRule::T3c { beta }] {
            let psi = selection_probabilities(rule, &a, &w).unwrap();
            prop_assert!(psi.iter().all(|&p| p >= 0.0));
            prop_assert!((psi.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn kl_bernoulli_is_a_divergence(p in 0.0f64..=1.0, q in 0.001f64..0.999) {
        prop_assert!(kl_bernoulli(p, q) >= 0.0);
        prop_assert!(kl_bernoulli(q, q).abs() < 1e-15);
    }

    #[test]
    fn incomplete_beta_matches_statrs(a in 0.5f64..40.0, b in 0.5f64..40.0, x in 0.0f64..=1.0) {
        let ours = beta_reg(a, b, x).unwrap();
        let oracle = statrs::function::beta::beta_reg(a, b, x);
        prop_assert!((ours - oracle).abs() < 1e-10, "I_{}({}, {}) = {} vs {}", x, a, b, ours, oracle);
        let l = ln_beta_reg(a, b, x).unwrap();
        prop_assert!(l <= 0.0);
    }
}
