//! Acceptance criteria 1 to 9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any failed. Every tolerance is a named constant below.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use bai::action::{optimal_action_probabilities, DEFAULT_TOL as ACTION_TOL};
use bai::allocation::{brute_force_gamma, gaussian_fast_path, optimal_allocation_beta, DEFAULT_TOL};
use bai::bandit::{presets, BanditInstance, RewardFamily, RngStream};
use bai::harness::{
    benchmark_step_time, convergence_diagnostics, run_fixed_horizon, run_replications, run_trial_with_state,
    summarize, tracking_target, write_records_csv, ExperimentConfig,
};
use bai::posterior::{beta_tail_bound, gaussian_tail_bounds, PosteriorState};
use bai::rules::{selection_probabilities, SamplingRule, Selector};
use bai::stopping::{StoppingCriterion, StoppingRule};
use bai::transport::{population_cost, CostMatrix};

use common::{beta_prob_greater, normal_cdf};

// 1: δ-correctness
const C1_DELTA: f64 = 0.01;
const C1_REPLICATIONS: u64 = 1000;
const C1_SEED: u64 = 1;
// 2: allocation solver
const C2_BRUTE_GRID: f64 = 2e-3;
const C2_GAMMA_TOL: f64 = 1e-3;
const C2_EQUALIZATION_TOL: f64 = 1e-10;
const C2_FAST_PATH_TOL: f64 = 1e-8;
const C2_SYMMETRIC_TOL: f64 = 1e-10;
// 3: tail-bound sandwiches
const C3_GAUSSIAN_STATES: usize = 10_000;
const C3_BETA_MAX_SHAPE: u64 = 12;
const C3_SEED: u64 = 3;
// 4: selection-probability fidelity
const C4_STATES: usize = 20;
const C4_INVOCATIONS: usize = 100_000;
const C4_SIGMAS: f64 = 3.0;
const C4_SEED: u64 = 4;
// 5: tracking
const C5_HORIZON: u64 = 200_000;
const C5_TOL: f64 = 0.05;
const C5_SEED: u64 = 5;
// 6: posterior convergence rate
const C6_HORIZON: u64 = 200_000;
const C6_STRIDE: u64 = 1000;
const C6_GAUSSIAN_REL: f64 = 0.20;
const C6_BERNOULLI_REL: f64 = 0.30;
const C6_SEED: u64 = 6;
// 7: timing ordering
const C7_ITERATIONS: u64 = 100_000;
// 8: sample complexity
const C8_DELTAS: [f64; 3] = [0.1, 0.01, 0.001];
const C8_REPLICATIONS: u64 = 1000;
const C8_FACTOR: f64 = 3.0;
const C8_SEED: u64 = 8;
// 9: determinism
const C9_SEED: u64 = 9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn gaussian(means: &[f64]) -> BanditInstance {
    BanditInstance::gaussian(means.to_vec(), 1.0).unwrap()
}

fn chernoff_config(instance: BanditInstance, rule: SamplingRule, delta: f64) -> ExperimentConfig {
    let arms = instance.arms();
    ExperimentConfig::new(instance, rule, StoppingCriterion::new(StoppingRule::Chernoff, delta, arms).unwrap())
}

fn criterion_1() -> Outcome {
    let bound = C1_DELTA + 3.0 * (C1_DELTA * (1.0 - C1_DELTA) / C1_REPLICATIONS as f64).sqrt();
    let rules = [
        SamplingRule::Ttts { beta: 0.5 },
        SamplingRule::T3c { beta: 0.5 },
        SamplingRule::BestChallenger { beta: 0.5 },
        SamplingRule::DTracking,
        SamplingRule::Uniform,
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for rule in rules {
        let mut config = chernoff_config(gaussian(&presets::MU1), rule, C1_DELTA);
        config.replications = C1_REPLICATIONS;
        config.base_seed = C1_SEED;
        let records = run_replications(&config, None).unwrap();
        let s = summarize(&config, &records).unwrap();
        pass &= s.error_rate <= bound && s.censored == 0;
        parts.push(format!("{} err={:.4} censored={} E[tau]={:.0}", rule.name(), s.error_rate, s.censored, s.tau_mean));
    }
    outcome(pass, format!("bound {bound:.4}; {}", parts.join(", ")))
}

fn criterion_2() -> Outcome {
    let family = RewardFamily::gaussian(1.0).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, means) in [("mu1", &presets::MU1[..]), ("mu2", &presets::MU2[..])] {
        let general = optimal_allocation_beta(means, family, 0.5, DEFAULT_TOL).unwrap();
        let brute = brute_force_gamma(means, family, 0.5, C2_BRUTE_GRID).unwrap();
        let best = bai::bandit::best_arm(&gaussian(means));
        let costs: Vec<f64> = (0..means.len())
            .filter(|&i| i != best)
            .map(|i| population_cost(family, means[best], means[i], general.beta, general.weights[i]).unwrap())
            .collect();
        let spread = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let fast = gaussian_fast_path(means, 1.0, 0.5, DEFAULT_TOL).unwrap();
        let weight_gap = fast
            .weights
            .iter()
            .zip(&general.weights)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let gamma_gap = (general.rate - brute).abs();
        pass &= gamma_gap <= C2_GAMMA_TOL && spread <= C2_EQUALIZATION_TOL && weight_gap <= C2_FAST_PATH_TOL;
        parts.push(format!("{name}: |G-G_brute|={gamma_gap:.1e} spread={spread:.1e} fast-path={weight_gap:.1e}"));
    }
    let sym = optimal_allocation_beta(&[1.0, 0.0, 0.0], family, 0.5, DEFAULT_TOL).unwrap();
    let exact = sym.weights == [0.5, 0.25, 0.25];
    let gamma_ok = (sym.rate - 1.0 / 12.0).abs() <= C2_SYMMETRIC_TOL;
    pass &= exact && gamma_ok;
    parts.push(format!("symmetric: weights {:?} G-1/12={:.1e}", sym.weights, sym.rate - 1.0 / 12.0));
    outcome(pass, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let mut rng = RngStream::new(C3_SEED, 0).rng();
    let family = RewardFamily::gaussian(1.0).unwrap();
    let mut gaussian_violations = 0;
    for _ in 0..C3_GAUSSIAN_STATES {
        let counts = vec![rng.random_range(1..=1000u64), rng.random_range(1..=1000u64)];
        let means: [f64; 2] = [rng.random(), rng.random()];
        let sums = vec![means[0] * counts[0] as f64, means[1] * counts[1] as f64];
        let state = PosteriorState::from_counts(family, counts.clone(), sums).unwrap();
        let (i, j) = if state.empirical_mean(0) <= state.empirical_mean(1) { (0, 1) } else { (1, 0) };
        let bounds = gaussian_tail_bounds(&state, i, j).unwrap();
        let s = (1.0 / counts[0] as f64 + 1.0 / counts[1] as f64).sqrt();
        let exact = normal_cdf(-(state.empirical_mean(j) - state.empirical_mean(i)) / s);
        if !bounds.contains(exact) {
            gaussian_violations += 1;
        }
    }
    let (mut checked, mut beta_violations) = (0, 0);
    for a in 1..=C3_BETA_MAX_SHAPE {
        for b in 1..=C3_BETA_MAX_SHAPE {
            for c in 1..=C3_BETA_MAX_SHAPE {
                for d in 1..=C3_BETA_MAX_SHAPE {
                    let Ok(bound) = beta_tail_bound(a, b, c, d) else { continue };
                    checked += 1;
                    if beta_prob_greater(a, b, c, d) > bound.bound {
                        beta_violations += 1;
                    }
                }
            }
        }
    }
    outcome(
        gaussian_violations == 0 && beta_violations == 0,
        format!(
            "gaussian {gaussian_violations}/{C3_GAUSSIAN_STATES} violations; beta {beta_violations}/{checked} admissible grid points violated"
        ),
    )
}

fn frozen_states(family: RewardFamily, rng: &mut impl Rng) -> Vec<PosteriorState> {
    let (means, lo, hi): (&[f64], u64, u64) = match family {
        RewardFamily::Gaussian { .. } => (&[0.5, 0.4, 0.3, 0.2], 3, 40),
        RewardFamily::Bernoulli => (&[0.6, 0.5, 0.45, 0.3], 5, 40),
    };
    (0..C4_STATES)
        .map(|_| {
            let counts: Vec<u64> = means.iter().map(|_| rng.random_range(lo..=hi)).collect();
            let sums = counts
                .iter()
                .zip(means)
                .map(|(&t, &m)| match family {
                    RewardFamily::Gaussian { .. } => {
                        let z: f64 = StandardNormal.sample(rng);
                        t as f64 * m + (t as f64).sqrt() * z
                    }
                    RewardFamily::Bernoulli => Binomial::new(t, m).unwrap().sample(rng) as f64,
                })
                .collect();
            PosteriorState::from_counts(family, counts, sums).unwrap()
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = RngStream::new(C4_SEED, 0).rng();
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut misses = Vec::new();
    for family in [RewardFamily::gaussian(1.0).unwrap(), RewardFamily::Bernoulli] {
        for (s, state) in frozen_states(family, &mut rng).iter().enumerate() {
            let a = optimal_action_probabilities(state, ACTION_TOL).unwrap();
            let w = CostMatrix::new(state).unwrap();
            for rule in [SamplingRule::Ttts { beta: 0.5 }, SamplingRule::T3c { beta: 0.5 }] {
                let psi = selection_probabilities(rule, &a, &w).unwrap();
                let mut selector = Selector::new(rule).unwrap();
                let mut freq = vec![0usize; state.arms()];
                for _ in 0..C4_INVOCATIONS {
                    freq[selector.select(state, None, &mut rng).unwrap().arm] += 1;
                }
                for (i, (&f, &p)) in freq.iter().zip(&psi).enumerate() {
                    checked += 1;
                    let n = C4_INVOCATIONS as f64;
                    let sd = (p * (1.0 - p) / n).sqrt();
                    let dev = (f as f64 / n - p).abs();
                    let z = if sd > 0.0 { dev / sd } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
                    worst = worst.max(z);
                    if z > C4_SIGMAS {
                        let fam = if family.is_gaussian() { "gaussian" } else { "bernoulli" };
                        misses.push(format!("{fam} state {s} {} arm {i} at {z:.2} sd", rule.name()));
                    }
                }
            }
        }
    }
    outcome(
        misses.is_empty(),
        format!("{checked} arm frequencies, largest deviation {worst:.2} sd; outside 3 sd: [{}]", misses.join(", ")),
    )
}

fn criterion_5() -> Outcome {
    let instance = gaussian(&presets::MU2);
    let mut pass = true;
    let mut parts = Vec::new();
    for rule in [SamplingRule::Ttts { beta: 0.5 }, SamplingRule::T3c { beta: 0.5 }] {
        let target = tracking_target(&instance, rule).unwrap();
        let record = run_fixed_horizon(&instance, rule, C5_HORIZON, C5_HORIZON, C5_SEED).unwrap();
        let n: u64 = record.final_counts.iter().sum();
        let err = record
            .final_counts
            .iter()
            .zip(&target.weights)
            .map(|(&t, &w)| (t as f64 / n as f64 - w).abs())
            .fold(0.0, f64::max);
        pass &= n == C5_HORIZON && err <= C5_TOL;
        parts.push(format!("{} n={n} max|T/n-w|={err:.4}", rule.name()));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_6() -> Outcome {
    let cases = [
        ("gaussian [0.5, 0]", gaussian(&[0.5, 0.0]), C6_GAUSSIAN_REL),
        ("bernoulli [0.6, 0.4]", BanditInstance::bernoulli(vec![0.6, 0.4]).unwrap(), C6_BERNOULLI_REL),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, instance, rel) in cases {
        let rule = SamplingRule::Ttts { beta: 0.5 };
        let target = tracking_target(&instance, rule).unwrap();
        let record = run_fixed_horizon(&instance, rule, C6_HORIZON, C6_STRIDE, C6_SEED).unwrap();
        let diag = convergence_diagnostics(record.trace.as_deref().unwrap(), &target).unwrap();
        let ratio = diag.slope / target.rate;
        pass &= (ratio - 1.0).abs() <= rel;
        parts.push(format!("{name}: slope {:.5} vs G {:.5} (ratio {ratio:.3}, band {rel})", diag.slope, target.rate));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_7() -> Outcome {
    let config = chernoff_config(gaussian(&presets::MU1), SamplingRule::T3c { beta: 0.5 }, 0.01);
    let (record, state) = run_trial_with_state(&config, 0).unwrap();
    let time = |rule| benchmark_step_time(rule, &state, C7_ITERATIONS, 0).unwrap().mean_s;
    let uniform = time(SamplingRule::Uniform);
    let t3c = time(SamplingRule::T3c { beta: 0.5 });
    let ttts = time(SamplingRule::Ttts { beta: 0.5 });
    let dtracking = time(SamplingRule::DTracking);
    outcome(
        uniform <= t3c && t3c < ttts && t3c < dtracking,
        format!(
            "state after {} pulls; mean s/step uniform {uniform:.2e}, t3c {t3c:.2e}, ttts {ttts:.2e}, dtracking {dtracking:.2e}",
            record.tau
        ),
    )
}

fn criterion_8() -> Outcome {
    let instance = gaussian(&[1.0, 0.0]);
    let rule = SamplingRule::T3c { beta: 0.5 };
    let gamma = tracking_target(&instance, rule).unwrap().rate;
    let mut ratios = Vec::new();
    for delta in C8_DELTAS {
        let mut config = chernoff_config(instance.clone(), rule, delta);
        config.replications = C8_REPLICATIONS;
        config.base_seed = C8_SEED;
        let s = summarize(&config, &run_replications(&config, None).unwrap()).unwrap();
        ratios.push(s.tau_mean / (1.0 / delta).ln());
    }
    let decreasing = ratios.windows(2).all(|w| w[1] < w[0]);
    let last = *ratios.last().unwrap();
    let within = last <= C8_FACTOR / gamma && last >= 1.0 / (C8_FACTOR * gamma);
    outcome(
        decreasing && within,
        format!("E[tau]/ln(1/delta) = {ratios:.2?} for delta {C8_DELTAS:?}; 1/G = {:.2}", 1.0 / gamma),
    )
}

fn csv_bytes(config: &ExperimentConfig, workers: Option<usize>) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("records.csv");
    write_records_csv(&run_replications(config, workers).unwrap(), &path).unwrap();
    std::fs::read(&path).unwrap()
}

fn criterion_9() -> Outcome {
    let bayes = |delta, arms| StoppingCriterion::new(StoppingRule::Bayes { variant: Default::default() }, delta, arms).unwrap();
    // (config, replications); the costlier rules get fewer runs
    let configs = [
        (chernoff_config(gaussian(&presets::MU1), SamplingRule::Ttts { beta: 0.5 }, 0.05), 200),
        (chernoff_config(gaussian(&presets::MU2), SamplingRule::DTracking, 0.05), 50),
        (
            ExperimentConfig::new(
                BanditInstance::bernoulli(vec![0.8, 0.5, 0.3]).unwrap(),
                SamplingRule::Ttts { beta: 0.5 },
                bayes(0.1, 3),
            ),
            40,
        ),
        (ExperimentConfig::new(gaussian(&presets::MU2), SamplingRule::T3c { beta: 0.5 }, bayes(0.05, 4)), 200),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (mut config, replications) in configs {
        config.replications = replications;
        config.base_seed = C9_SEED;
        let serial = csv_bytes(&config, Some(1));
        let again = csv_bytes(&config, Some(1));
        let parallel = csv_bytes(&config, Some(4));
        let same = serial == again && serial == parallel;
        pass &= same;
        let family = if config.instance.family().is_gaussian() { "gaussian" } else { "bernoulli" };
        parts.push(format!("{} {family}: {} bytes, identical={same}", config.rule.name(), serial.len()));
    }
    outcome(pass, parts.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "delta-correctness", criterion_1),
        (2, "allocation solver", criterion_2),
        (3, "tail-bound sandwiches", criterion_3),
        (4, "selection-probability fidelity", criterion_4),
        (5, "tracking convergence", criterion_5),
        (6, "posterior convergence rate", criterion_6),
        (7, "timing ordering", criterion_7),
        (8, "sample complexity", criterion_8),
        (9, "determinism", criterion_9),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        let t0 = Instant::now();
        let o = run();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} ({name}, {:.1}s): {}", t0.elapsed().as_secs_f64(), o.detail);
        failed += usize::from(!o.pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
