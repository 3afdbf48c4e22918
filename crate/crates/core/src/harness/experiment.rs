use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::action::{optimal_action_probabilities, ActionProbabilities, DEFAULT_TOL};
use crate::allocation::{optimal_allocation, solve_beta, AllocationResult, DEFAULT_TOL as ALLOCATION_TOL};
use crate::bandit::{BanditInstance, RewardFamily, RngStream, StreamRng};
use crate::error::{Error, Result};
use crate::posterior::{argmax_first, PosteriorState};
use crate::rules::{SamplingRule, Selector};
use crate::stopping::{bayes_stop_ruled_out, ln_bayes_complement, should_stop, StoppingCriterion, StoppingRule};

use super::diagnostics::{convergence_diagnostics, tracking_error};

/// Horizon cap used when a configuration gives none.
pub const DEFAULT_HORIZON_CAP: u64 = 1_000_000;
pub const DEFAULT_TRACE_STRIDE: u64 = 100;
pub const DEFAULT_REPLICATIONS: u64 = 1000;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "BAI_THREADS";

fn default_replications() -> u64 {
    DEFAULT_REPLICATIONS
}

fn default_horizon_cap() -> u64 {
    DEFAULT_HORIZON_CAP
}

fn default_trace_stride() -> u64 {
    DEFAULT_TRACE_STRIDE
}

/// Everything that determines an experiment's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: BanditInstance,
    pub rule: SamplingRule,
    /// `arms` may be left at zero and is then taken from the instance.
    pub criterion: StoppingCriterion,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_horizon_cap")]
    pub horizon_cap: u64,
    /// Record a trace every `trace_stride` rounds. Off by default.
    #[serde(default)]
    pub trace: bool,
    #[serde(default = "default_trace_stride")]
    pub trace_stride: u64,
    /// Rounds between stopping checks; the stopping rule's default if unset.
    /// A stride of m delays the recorded stopping time by at most m - 1.
    #[serde(default)]
    pub check_every: Option<u64>,
    /// Measure wall-clock time per selection. Timings vary from run to run,
    /// so enabling this gives up byte-identical output.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(instance: BanditInstance, rule: SamplingRule, criterion: StoppingCriterion) -> Self {
        ExperimentConfig {
            instance,
            rule,
            criterion,
            replications: DEFAULT_REPLICATIONS,
            base_seed: 0,
            horizon_cap: DEFAULT_HORIZON_CAP,
            trace: false,
            trace_stride: DEFAULT_TRACE_STRIDE,
            check_every: None,
            timing: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        self.criterion().validate()?;
        let k = self.instance.arms();
        if self.criterion.arms != 0 && self.criterion.arms != k {
            return Err(Error::InvalidArgument(format!(
                "criterion is for {} arms but the instance has {k}",
                self.criterion.arms
            )));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.horizon_cap < k as u64 {
            return Err(Error::InvalidArgument(format!(
                "horizon cap {} is below the arm count {k}",
                self.horizon_cap
            )));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidArgument("trace stride must be positive".into()));
        }
        if self.check_every == Some(0) {
            return Err(Error::InvalidArgument("check stride must be positive".into()));
        }
        Ok(())
    }

    /// The stopping criterion with its arm count filled in.
    pub fn criterion(&self) -> StoppingCriterion {
        StoppingCriterion {
            arms: self.instance.arms(),
            ..self.criterion
        }
    }

    pub fn check_every(&self) -> u64 {
        self.check_every.unwrap_or_else(|| self.criterion.rule.default_check_every())
    }
}

/// One sample of a run's trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// Total observations so far.
    pub n: u64,
    /// `T_{n,i} / n`.
    pub proportions: Vec<f64>,
    /// `ln(1 - a_{n,I*})`.
    pub log_one_minus_a_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub replication: u64,
    /// Total observations at stopping, initialization included.
    pub tau: u64,
    pub recommendation: usize,
    /// Recommendation is the best arm and the run was not censored.
    pub correct: bool,
    /// The horizon cap was reached before the stopping rule fired.
    pub censored: bool,
    /// Mean seconds per selection, when timing is enabled.
    pub step_time_s: Option<f64>,
    pub final_counts: Vec<u64>,
    /// TTTS rounds whose challenger was drawn from its conditional law.
    pub direct_challenger_draws: u64,
    /// TTTS rounds that exhausted the redraw cap.
    pub resample_cap_hits: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TracePoint>>,
}

/// Whether the error guarantee behind the stopping thresholds covers the
/// instance's family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Guarantee {
    /// Gaussian rewards: the thresholds are proven δ-correct.
    Proven,
    /// Bernoulli rewards: the same thresholds are used without proof.
    Heuristic,
}

impl Guarantee {
    pub fn for_family(family: RewardFamily) -> Self {
        match family {
            RewardFamily::Gaussian { .. } => Guarantee::Proven,
            RewardFamily::Bernoulli => Guarantee::Heuristic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub rule: String,
    pub stopping: String,
    pub delta: f64,
    pub replications: u64,
    /// Fraction of runs without a correct recommendation (censored runs
    /// included).
    pub error_rate: f64,
    /// Uncensored runs recommending a sub-optimal arm.
    pub errors: u64,
    pub censored: u64,
    pub tau_mean: f64,
    pub tau_median: f64,
    pub tau_p90: f64,
    pub mean_step_time_s: Option<f64>,
    /// Mean over runs of `max_i |T_{τ,i}/τ - ω_i|`.
    pub tracking_error: f64,
    /// The allocation `ω` the tracking error is measured against.
    pub tracking_target: Vec<f64>,
    /// Mean slope of `-ln(1 - a_{n,I*})` in `n`, when traces were recorded.
    pub convergence_slope: Option<f64>,
    pub guarantee: Guarantee,
}

/// The allocation a rule is expected to track on `instance`: `ω^β` for the
/// top-two rules and BC, `ω^{β*}` for D-Tracking, uniform for round-robin.
pub fn tracking_target(instance: &BanditInstance, rule: SamplingRule) -> Result<AllocationResult> {
    let means = instance.means();
    let family = instance.family();
    match rule {
        SamplingRule::DTracking => optimal_allocation(means, family, 1e-10),
        SamplingRule::Uniform => {
            let k = means.len();
            Ok(AllocationResult {
                weights: vec![1.0 / k as f64; k],
                rate: f64::NAN,
                beta: 1.0 / k as f64,
                residual: f64::NAN,
            })
        }
        other => solve_beta(means, family, other.beta().expect("top-two rules carry beta"), ALLOCATION_TOL),
    }
}

struct Stopping {
    criterion: StoppingCriterion,
    check_every: u64,
}

struct Simulation<'a> {
    instance: &'a BanditInstance,
    rule: SamplingRule,
    stopping: Option<Stopping>,
    horizon: u64,
    trace_stride: Option<u64>,
    timing: bool,
}

impl Simulation<'_> {
    fn run(&self, replication: u64, rng: &mut StreamRng) -> Result<(RunRecord, PosteriorState)> {
        let k = self.instance.arms();
        let family = self.instance.family();
        let best = self.instance.best_arm();
        let mut state = PosteriorState::new(family, k);

        // The improper Gaussian prior needs one observation per arm; the
        // transportation costs need them under any prior.
        let initialize = family.is_gaussian()
            || self.rule.needs_all_arms_observed()
            || self.stopping.as_ref().is_some_and(|s| !s.criterion.rule.needs_action_probabilities());
        if initialize {
            for arm in 0..k {
                let reward = self.instance.sample_reward(arm, rng)?;
                state.update(arm, reward)?;
            }
            state.end_initialization();
        }

        let mut selector = Selector::new(self.rule)?;
        let mut trace = self.trace_stride.map(|_| Vec::new());
        let (mut direct, mut cap_hits) = (0u64, 0u64);
        let (mut time_total, mut time_count) = (0.0f64, 0u64);

        let mut outcome = None;
        loop {
            let round = state.rounds();
            let mut a: Option<ActionProbabilities> = None;
            let mut probabilities = |state: &PosteriorState| -> Result<ActionProbabilities> {
                match &a {
                    Some(a) => Ok(a.clone()),
                    None => {
                        let computed = optimal_action_probabilities(state, DEFAULT_TOL)?;
                        a = Some(computed.clone());
                        Ok(computed)
                    }
                }
            };

            if let (Some(points), Some(stride)) = (trace.as_mut(), self.trace_stride) {
                if round.is_multiple_of(stride) {
                    let probs = probabilities(&state)?;
                    let n = state.total_pulls();
                    points.push(TracePoint {
                        n,
                        proportions: state.counts().iter().map(|&t| t as f64 / n.max(1) as f64).collect(),
                        log_one_minus_a_best: probs.log_complement(best),
                    });
                }
            }

            if let Some(stopping) = &self.stopping {
                let c = &stopping.criterion;
                let ruled_out = match c.rule {
                    StoppingRule::Bayes { variant } if round.is_multiple_of(stopping.check_every) => {
                        let n = state.total_pulls().max(1);
                        bayes_stop_ruled_out(&state, ln_bayes_complement(n, c.delta, c.arms, variant)?)?
                    }
                    _ => false,
                };
                if round.is_multiple_of(stopping.check_every) && !ruled_out {
                    let probs = if stopping.criterion.rule.needs_action_probabilities() {
                        Some(probabilities(&state)?)
                    } else {
                        None
                    };
                    let decision = should_stop(&stopping.criterion, &state, probs.as_ref(), None)?;
                    if let Some(rec) = decision.recommendation {
                        outcome = Some(rec);
                        break;
                    }
                }
            }

            if state.total_pulls() >= self.horizon {
                break;
            }

            let probs = if self.rule.needs_action_probabilities() {
                Some(probabilities(&state)?)
            } else {
                None
            };
            let started = self.timing.then(Instant::now);
            let choice = selector.select(&state, probs.as_ref(), rng)?;
            if let Some(t0) = started {
                time_total += t0.elapsed().as_secs_f64();
                time_count += 1;
            }
            direct += choice.direct_challenger as u64;
            cap_hits += choice.cap_hit as u64;

            let reward = self.instance.sample_reward(choice.arm, rng)?;
            state.update(choice.arm, reward)?;
        }

        let censored = outcome.is_none() && self.stopping.is_some();
        let recommendation = outcome.unwrap_or_else(|| argmax_first(&state.empirical_means()));
        let record = RunRecord {
            replication,
            tau: state.total_pulls(),
            recommendation,
            correct: !censored && recommendation == best,
            censored,
            step_time_s: (self.timing && time_count > 0).then(|| time_total / time_count as f64),
            final_counts: state.counts().to_vec(),
            direct_challenger_draws: direct,
            resample_cap_hits: cap_hits,
            trace,
        };
        Ok((record, state))
    }
}

fn stream(config: &ExperimentConfig, replication: u64) -> StreamRng {
    RngStream::new(config.base_seed, replication).rng()
}

/// One replication, also returning the final posterior state.
pub fn run_trial_with_state(config: &ExperimentConfig, replication: u64) -> Result<(RunRecord, PosteriorState)> {
    config.validate()?;
    let sim = Simulation {
        instance: &config.instance,
        rule: config.rule,
        stopping: Some(Stopping {
            criterion: config.criterion(),
            check_every: config.check_every(),
        }),
        horizon: config.horizon_cap,
        trace_stride: config.trace.then_some(config.trace_stride),
        timing: config.timing,
    };
    sim.run(replication, &mut stream(config, replication))
}

/// Replication `replication` of the experiment; a pure function of the
/// configuration and the index.
pub fn run_trial(config: &ExperimentConfig, replication: u64) -> Result<RunRecord> {
    run_trial_with_state(config, replication).map(|(r, _)| r)
}

/// A run with no stopping rule, forced to `horizon` observations, recording
/// a trace every `trace_stride` rounds. Never marked censored.
pub fn run_fixed_horizon(
    instance: &BanditInstance,
    rule: SamplingRule,
    horizon: u64,
    trace_stride: u64,
    seed: u64,
) -> Result<RunRecord> {
    if trace_stride == 0 {
        return Err(Error::InvalidArgument("trace stride must be positive".into()));
    }
    let sim = Simulation {
        instance,
        rule,
        stopping: None,
        horizon,
        trace_stride: Some(trace_stride),
        timing: false,
    };
    sim.run(0, &mut RngStream::new(seed, 0).rng()).map(|(r, _)| r)
}

/// Worker count from `BAI_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::InvalidArgument(format!("{THREADS_ENV} must be a positive integer, got {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// All replications in index order. `workers` overrides `BAI_THREADS`;
/// `Some(1)` runs serially on the calling thread.
pub fn run_replications(config: &ExperimentConfig, workers: Option<usize>) -> Result<Vec<RunRecord>> {
    config.validate()?;
    let workers = match workers {
        Some(w) => Some(w),
        None => threads_from_env()?,
    };
    let one = |r: u64| {
        run_trial(config, r).map_err(|e| Error::Replication {
            replication: r,
            source: Box::new(e),
        })
    };
    let results: Vec<Result<RunRecord>> = match workers {
        Some(1) => (0..config.replications).map(one).collect(),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("cannot start {w} workers: {e}")))?;
            pool.install(|| (0..config.replications).into_par_iter().map(one).collect())
        }
        None => (0..config.replications).into_par_iter().map(one).collect(),
    };
    results.into_iter().collect()
}

/// Quantile by linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregates records in the order given.
pub fn summarize(config: &ExperimentConfig, records: &[RunRecord]) -> Result<ExperimentSummary> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no records to summarize".into()));
    }
    let n = records.len() as f64;
    let mut taus: Vec<f64> = records.iter().map(|r| r.tau as f64).collect();
    let tau_mean = taus.iter().sum::<f64>() / n;
    taus.sort_by(f64::total_cmp);

    let target = tracking_target(&config.instance, config.rule)?;
    let tracking = records
        .iter()
        .map(|r| {
            let total = r.final_counts.iter().sum::<u64>() as f64;
            let props: Vec<f64> = r.final_counts.iter().map(|&t| t as f64 / total).collect();
            tracking_error(&props, &target.weights)
        })
        .sum::<f64>()
        / n;

    let timings: Vec<f64> = records.iter().filter_map(|r| r.step_time_s).collect();
    let slopes: Vec<f64> = records
        .iter()
        .filter_map(|r| r.trace.as_deref())
        .filter_map(|t| convergence_diagnostics(t, &target).ok())
        .map(|d| d.slope)
        .collect();

    let correct = records.iter().filter(|r| r.correct).count();
    Ok(ExperimentSummary {
        rule: config.rule.name().to_string(),
        stopping: match config.criterion.rule {
            crate::stopping::StoppingRule::Bayes { .. } => "bayes".into(),
            crate::stopping::StoppingRule::Chernoff => "chernoff".into(),
        },
        delta: config.criterion.delta,
        replications: records.len() as u64,
        error_rate: (records.len() - correct) as f64 / n,
        errors: records.iter().filter(|r| !r.censored && !r.correct).count() as u64,
        censored: records.iter().filter(|r| r.censored).count() as u64,
        tau_mean,
        tau_median: quantile(&taus, 0.5),
        tau_p90: quantile(&taus, 0.9),
        mean_step_time_s: (!timings.is_empty()).then(|| timings.iter().sum::<f64>() / timings.len() as f64),
        tracking_error: tracking,
        tracking_target: target.weights,
        convergence_slope: (!slopes.is_empty()).then(|| slopes.iter().sum::<f64>() / slopes.len() as f64),
        guarantee: Guarantee::for_family(config.instance.family()),
    })
}

/// Runs every replication and aggregates them.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let records = run_replications(config, None)?;
    summarize(config, &records)
}
