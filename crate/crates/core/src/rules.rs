//! Sampling rules: the top-two rules TTTS, T3C and TTPS, Best Challenger,
//! D-Tracking and uniform round-robin, plus the analytic selection
//! probabilities `ψ_{n,i}` of TTTS and T3C.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::action::{log_action_probabilities_of, ActionProbabilities, DEFAULT_TOL};
use crate::allocation::{optimal_allocation, AllocationResult};
use crate::bandit::RewardFamily;
use crate::error::{Error, Result};
use crate::posterior::{PosteriorParams, PosteriorSampler, PosteriorState};
use crate::special::{ln_norm_cdf, log_sum_exp, norm_cdf};
use crate::transport::{cost_unchecked, CostMatrix};

/// Posterior redraws allowed per round before TTTS switches to sampling its
/// challenger directly.
pub const TTTS_RESAMPLE_CAP: u64 = 1_000_000;

/// Below this estimated chance that a redraw finds a new argmax, TTTS draws
/// its challenger directly from the conditional law instead of by rejection.
pub const TTTS_DIRECT_BELOW: f64 = 1e-4;

/// Separation imposed on empirically tied leaders before D-Tracking solves
/// for its allocation.
pub const DTRACKING_TIE_SEPARATION: f64 = 1e-9;

/// Bernoulli means are clamped into `[ε, 1 - ε]` before D-Tracking solves.
pub const DTRACKING_BERNOULLI_CLAMP: f64 = 1e-6;

/// β-tolerance of D-Tracking's per-round search for β*.
const DTRACKING_BETA_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplingRule {
    Ttts { beta: f64 },
    T3c { beta: f64 },
    Ttps { beta: f64 },
    #[serde(rename = "bc")]
    BestChallenger { beta: f64 },
    DTracking,
    Uniform,
}

impl SamplingRule {
    pub fn validate(&self) -> Result<()> {
        if let Some(beta) = self.beta() {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")));
            }
        }
        Ok(())
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            SamplingRule::Ttts { beta }
            | SamplingRule::T3c { beta }
            | SamplingRule::Ttps { beta }
            | SamplingRule::BestChallenger { beta } => Some(beta),
            SamplingRule::DTracking | SamplingRule::Uniform => None,
        }
    }

    /// Short name as used on the command line.
    pub fn name(&self) -> &'static str {
        match self {
            SamplingRule::Ttts { .. } => "ttts",
            SamplingRule::T3c { .. } => "t3c",
            SamplingRule::Ttps { .. } => "ttps",
            SamplingRule::BestChallenger { .. } => "bc",
            SamplingRule::DTracking => "dtracking",
            SamplingRule::Uniform => "uniform",
        }
    }

    /// Builds a rule from its command-line name. `beta` is ignored by the
    /// rules that have none.
    pub fn from_name(name: &str, beta: f64) -> Result<Self> {
        let rule = match name {
            "ttts" => SamplingRule::Ttts { beta },
            "t3c" => SamplingRule::T3c { beta },
            "ttps" => SamplingRule::Ttps { beta },
            "bc" => SamplingRule::BestChallenger { beta },
            "dtracking" => SamplingRule::DTracking,
            "uniform" => SamplingRule::Uniform,
            other => return Err(Error::InvalidArgument(format!("unknown sampling rule {other:?}"))),
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn needs_action_probabilities(&self) -> bool {
        matches!(self, SamplingRule::Ttps { .. })
    }

    /// Whether the rule reads transportation costs, and so needs every arm
    /// observed even under a proper prior.
    pub fn needs_all_arms_observed(&self) -> bool {
        matches!(
            self,
            SamplingRule::T3c { .. } | SamplingRule::BestChallenger { .. } | SamplingRule::DTracking
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Leader,
    Challenger,
    /// Forced exploration of an under-sampled arm.
    Forced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub arm: usize,
    pub role: Role,
    /// TTTS: posterior redraws spent finding the challenger.
    pub resamples: u64,
    /// Size of the tie set the chosen arm was drawn from.
    pub tie_size: usize,
    /// TTTS: the challenger was drawn from its conditional law rather than
    /// by redrawing until a new argmax appeared.
    pub direct_challenger: bool,
    /// TTTS: the redraw cap was exhausted this round.
    pub cap_hit: bool,
}

impl SelectionTrace {
    fn new(arm: usize, role: Role, tie_size: usize) -> Self {
        SelectionTrace {
            arm,
            role,
            resamples: 0,
            tie_size,
            direct_challenger: false,
            cap_hit: false,
        }
    }
}

/// Index attaining the extreme of `values` (skipping `exclude`), with exact
/// ties broken uniformly at random. Returns the index and the tie-set size.
fn pick<R: Rng + ?Sized>(values: &[f64], exclude: Option<usize>, largest: bool, rng: &mut R) -> (usize, usize) {
    let better = |a: f64, b: f64| if largest { a > b } else { a < b };
    let mut best = f64::NAN;
    let mut ties = 0usize;
    let mut first = usize::MAX;
    for (i, &v) in values.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        if first == usize::MAX || better(v, best) {
            best = v;
            first = i;
            ties = 1;
        } else if v == best {
            ties += 1;
        }
    }
    if ties <= 1 {
        return (first, 1);
    }
    let k = rng.random_range(0..ties);
    let chosen = values
        .iter()
        .enumerate()
        .filter(|&(i, &v)| Some(i) != exclude && v == best)
        .nth(k)
        .map(|(i, _)| i)
        .expect("tie set is non-empty");
    (chosen, ties)
}

/// Least-pulled arm among `candidates`, ties uniformly at random.
fn least_pulled<R: Rng + ?Sized>(state: &PosteriorState, candidates: &[usize], rng: &mut R) -> (usize, usize) {
    let counts: Vec<f64> = candidates.iter().map(|&i| state.counts()[i] as f64).collect();
    let (k, ties) = pick(&counts, None, false, rng);
    (candidates[k], ties)
}

/// A sampling rule together with its per-run scratch space.
#[derive(Debug, Clone)]
pub struct Selector {
    rule: SamplingRule,
    theta: Vec<f64>,
    last_allocation: Option<AllocationResult>,
}

impl Selector {
    pub fn new(rule: SamplingRule) -> Result<Self> {
        rule.validate()?;
        Ok(Selector {
            rule,
            theta: Vec::new(),
            last_allocation: None,
        })
    }

    pub fn rule(&self) -> SamplingRule {
        self.rule
    }

    /// The allocation D-Tracking most recently tracked.
    pub fn last_allocation(&self) -> Option<&AllocationResult> {
        self.last_allocation.as_ref()
    }

    /// Chooses the arm to pull next. TTPS needs `a`; the other rules ignore it.
    pub fn select<R: Rng + ?Sized>(
        &mut self,
        state: &PosteriorState,
        a: Option<&ActionProbabilities>,
        rng: &mut R,
    ) -> Result<SelectionTrace> {
        let k = state.arms();
        self.theta.resize(k, 0.0);
        if self.rule.needs_all_arms_observed() && !state.all_pulled() {
            return Err(Error::Precondition(format!("{} needs every arm observed", self.rule.name())));
        }
        match self.rule {
            SamplingRule::Uniform => Ok(SelectionTrace::new((state.rounds() % k as u64) as usize, Role::Leader, 1)),
            SamplingRule::Ttts { beta } => self.ttts(state, beta, rng),
            SamplingRule::T3c { beta } => {
                let sampler = PosteriorSampler::new(state)?;
                sampler.sample_into(&mut self.theta, rng);
                let (leader, ties) = pick(&self.theta, None, true, rng);
                if rng.random::<f64>() < beta {
                    return Ok(SelectionTrace::new(leader, Role::Leader, ties));
                }
                let (challenger, ties) = cheapest_challenger(state, leader, rng);
                Ok(SelectionTrace::new(challenger, Role::Challenger, ties))
            }
            SamplingRule::Ttps { beta } => {
                let a = a.ok_or_else(|| Error::InvalidArgument("TTPS needs the optimal action probabilities".into()))?;
                if a.probs.len() != k {
                    return Err(Error::InvalidArgument(format!(
                        "{} action probabilities for {k} arms",
                        a.probs.len()
                    )));
                }
                let (leader, ties) = pick(&a.log_probs, None, true, rng);
                if rng.random::<f64>() < beta {
                    return Ok(SelectionTrace::new(leader, Role::Leader, ties));
                }
                let (challenger, ties) = pick(&a.log_probs, Some(leader), true, rng);
                Ok(SelectionTrace::new(challenger, Role::Challenger, ties))
            }
            SamplingRule::BestChallenger { beta } => {
                let n = state.total_pulls() as f64;
                let starved: Vec<usize> = (0..k).filter(|&i| (state.counts()[i] as f64) < n.sqrt()).collect();
                if !starved.is_empty() {
                    let (arm, ties) = least_pulled(state, &starved, rng);
                    return Ok(SelectionTrace::new(arm, Role::Forced, ties));
                }
                let (leader, ties) = pick(&state.empirical_means(), None, true, rng);
                if rng.random::<f64>() < beta {
                    return Ok(SelectionTrace::new(leader, Role::Leader, ties));
                }
                let (challenger, ties) = cheapest_challenger(state, leader, rng);
                Ok(SelectionTrace::new(challenger, Role::Challenger, ties))
            }
            SamplingRule::DTracking => {
                let n = state.total_pulls() as f64;
                let min = state.counts().iter().copied().min().unwrap_or(0) as f64;
                if min < n.sqrt() - k as f64 / 2.0 {
                    let all: Vec<usize> = (0..k).collect();
                    let (arm, ties) = least_pulled(state, &all, rng);
                    return Ok(SelectionTrace::new(arm, Role::Forced, ties));
                }
                let means = tracking_means(state);
                let target = optimal_allocation(&means, state.family(), DTRACKING_BETA_TOL)?;
                let deficit: Vec<f64> = (0..k).map(|i| n * target.weights[i] - state.counts()[i] as f64).collect();
                self.last_allocation = Some(target);
                let (arm, ties) = pick(&deficit, None, true, rng);
                Ok(SelectionTrace::new(arm, Role::Leader, ties))
            }
        }
    }

    fn ttts<R: Rng + ?Sized>(&mut self, state: &PosteriorState, beta: f64, rng: &mut R) -> Result<SelectionTrace> {
        let sampler = PosteriorSampler::new(state)?;
        sampler.sample_into(&mut self.theta, rng);
        let (leader, ties) = pick(&self.theta, None, true, rng);
        if rng.random::<f64>() < beta {
            return Ok(SelectionTrace::new(leader, Role::Leader, ties));
        }

        // The challenger's law given the leader is a_j / (1 - a_leader) on
        // j != leader, whichever way it is drawn; rejection is exact but its
        // expected cost is 1/(1 - a_leader) redraws.
        let mut trace = SelectionTrace::new(leader, Role::Challenger, 1);
        if miss_chance_estimate(state, leader)? >= TTTS_DIRECT_BELOW {
            while trace.resamples < TTTS_RESAMPLE_CAP {
                sampler.sample_into(&mut self.theta, rng);
                trace.resamples += 1;
                let (arm, ties) = pick(&self.theta, None, true, rng);
                if arm != leader {
                    trace.arm = arm;
                    trace.tie_size = ties;
                    return Ok(trace);
                }
            }
            // Failed redraws carry no information about the next success,
            // so switching to the direct draw keeps the law unchanged.
            trace.cap_hit = true;
        }
        trace.direct_challenger = true;
        trace.arm = direct_challenger(state, leader, rng)?;
        Ok(trace)
    }
}

/// `argmin_{j != leader} W_n(leader, j)`, ties uniformly at random.
fn cheapest_challenger<R: Rng + ?Sized>(state: &PosteriorState, leader: usize, rng: &mut R) -> (usize, usize) {
    let row: Vec<f64> = (0..state.arms())
        .map(|j| if j == leader { f64::INFINITY } else { cost_unchecked(state, leader, j) })
        .collect();
    pick(&row, Some(leader), false, rng)
}

/// Rough `P(argmax θ != leader)`: the sum of the pairwise normal
/// approximations. Only used to choose between two exact samplers.
fn miss_chance_estimate(state: &PosteriorState, leader: usize) -> Result<f64> {
    let params = state.all_params()?;
    let l = &params[leader];
    Ok(params
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != leader)
        .map(|(_, p)| norm_cdf((p.mean() - l.mean()) / (p.variance() + l.variance()).sqrt()))
        .sum())
}

/// Draws `j != leader` with probability proportional to `a_j`.
fn direct_challenger<R: Rng + ?Sized>(state: &PosteriorState, leader: usize, rng: &mut R) -> Result<usize> {
    let others: Vec<usize> = (0..state.arms()).filter(|&j| j != leader).collect();
    if others.len() == 1 {
        return Ok(others[0]);
    }
    let params = state.all_params()?;
    if let Some(arm) = gaussian_challenger(&params, leader, rng) {
        return Ok(arm);
    }
    let log_a = log_action_probabilities_of(state, &others, DEFAULT_TOL)?;
    let total = log_sum_exp(log_a.iter().copied());
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (&j, &l) in others.iter().zip(&log_a) {
        acc += (l - total).exp();
        if u < acc {
            return Ok(j);
        }
    }
    Ok(*others.last().expect("at least two candidates"))
}

/// Tries allowed to the union sampler before it gives up. Each try is
/// accepted with probability at least `1 / (K - 1)`.
const UNION_SAMPLER_TRIES: u32 = 10_000;

/// Exact draw of `argmax θ` given `argmax θ != leader` for Gaussian
/// posteriors, without quadrature.
///
/// The event is the union of `E_j = {θ_j > θ_leader}`. Pick `j` with
/// probability proportional to `P(E_j)`, draw `θ` given `E_j`, and accept
/// with probability `1 / #{k : E_k holds}`; accepted draws follow the law of
/// `θ` given the union. Returns `None` for Beta posteriors or if every try
/// was rejected.
fn gaussian_challenger<R: Rng + ?Sized>(params: &[PosteriorParams], leader: usize, rng: &mut R) -> Option<usize> {
    let mean_var = |p: &PosteriorParams| match *p {
        PosteriorParams::Gaussian { mean, variance } => Some((mean, variance)),
        PosteriorParams::Beta { .. } => None,
    };
    let gaussians: Vec<(f64, f64)> = params.iter().map(mean_var).collect::<Option<_>>()?;
    let (ml, vl) = gaussians[leader];
    let log_w: Vec<f64> = gaussians
        .iter()
        .enumerate()
        .map(|(j, &(m, v))| {
            if j == leader {
                f64::NEG_INFINITY
            } else {
                ln_norm_cdf((m - ml) / (v + vl).sqrt())
            }
        })
        .collect();
    let total = log_sum_exp(log_w.iter().copied());
    let mut theta = vec![0.0; gaussians.len()];
    for _ in 0..UNION_SAMPLER_TRIES {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut j = usize::MAX;
        for (k, &l) in log_w.iter().enumerate() {
            if k == leader {
                continue;
            }
            acc += (l - total).exp();
            j = k;
            if u < acc {
                break;
            }
        }
        // θ_j - θ_leader given that it is positive, then θ_leader given
        // the difference.
        let (mj, vj) = gaussians[j];
        let (gap, var) = (mj - ml, vj + vl);
        let sd = var.sqrt();
        let d = gap + sd * normal_tail(-gap / sd, rng);
        let z: f64 = rng.sample(StandardNormal);
        let tl = ml - vl / var * (d - gap) + (vl * vj / var).sqrt() * z;
        for (k, (slot, &(m, v))) in theta.iter_mut().zip(&gaussians).enumerate() {
            *slot = if k == leader {
                tl
            } else if k == j {
                tl + d
            } else {
                let z: f64 = rng.sample(StandardNormal);
                m + v.sqrt() * z
            };
        }
        let beaten = theta.iter().enumerate().filter(|&(k, &t)| k != leader && t > tl).count();
        if rng.random::<f64>() * (beaten as f64) < 1.0 {
            return Some(pick(&theta, None, true, rng).0);
        }
    }
    None
}

/// Standard normal conditioned on exceeding `a`; exponential proposals
/// for `a > 0`, plain rejection otherwise.
fn normal_tail<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    if a <= 0.0 {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            if z > a {
                return z;
            }
        }
    }
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(Exp1);
        let z = a + e / lambda;
        if rng.random::<f64>() <= (-0.5 * (z - lambda) * (z - lambda)).exp() {
            return z;
        }
    }
}

/// Empirical means prepared for the allocation solver: Bernoulli means kept
/// off the boundary, and a leader tied with another arm nudged above it.
fn tracking_means(state: &PosteriorState) -> Vec<f64> {
    let mut means = state.empirical_means();
    if state.family() == RewardFamily::Bernoulli {
        for m in &mut means {
            *m = m.clamp(DTRACKING_BERNOULLI_CLAMP, 1.0 - DTRACKING_BERNOULLI_CLAMP);
        }
    }
    let best = crate::posterior::argmax_first(&means);
    let top = means[best];
    for (i, m) in means.iter_mut().enumerate() {
        if i != best && *m > top - DTRACKING_TIE_SEPARATION {
            *m = top - DTRACKING_TIE_SEPARATION;
        }
    }
    means
}

/// One-shot arm selection; see [`Selector::select`].
pub fn select_arm<R: Rng + ?Sized>(
    rule: SamplingRule,
    state: &PosteriorState,
    a: Option<&ActionProbabilities>,
    rng: &mut R,
) -> Result<(usize, SelectionTrace)> {
    let trace = Selector::new(rule)?.select(state, a, rng)?;
    Ok((trace.arm, trace))
}

/// Analytic probability `ψ_{n,i}` that TTTS or T3C plays arm `i` next.
///
/// TTTS: `ψ_i = β a_i + (1-β) a_i Σ_{j≠i} a_j/(1-a_j)`.
/// T3C: `ψ_i = β a_i + (1-β) Σ_{j≠i} a_j 1{i ∈ argmin_k W(j,k)} / |argmin_k W(j,k)|`.
pub fn selection_probabilities(rule: SamplingRule, a: &ActionProbabilities, costs: &CostMatrix) -> Result<Vec<f64>> {
    rule.validate()?;
    let k = a.probs.len();
    if costs.arms() != k {
        return Err(Error::InvalidArgument(format!("{k} probabilities but a {}-arm cost matrix", costs.arms())));
    }
    match rule {
        SamplingRule::Ttts { beta } => {
            // a_i a_j / (1 - a_j) in log space, so a_j near one stays finite
            let log_c: Vec<f64> = (0..k).map(|j| a.log_complement(j)).collect();
            Ok((0..k)
                .map(|i| {
                    let cross: f64 = (0..k)
                        .filter(|&j| j != i)
                        .map(|j| (a.log_probs[i] + a.log_probs[j] - log_c[j]).exp())
                        .sum();
                    beta * a.probs[i] + (1.0 - beta) * cross
                })
                .collect())
        }
        SamplingRule::T3c { beta } => {
            let mut psi: Vec<f64> = a.probs.iter().map(|p| beta * p).collect();
            for j in 0..k {
                let set = costs.argmin_set(j);
                let share = (1.0 - beta) * a.probs[j] / set.len() as f64;
                for i in set {
                    psi[i] += share;
                }
            }
            Ok(psi)
        }
        other => Err(Error::InvalidArgument(format!(
            "analytic selection probabilities are only available for ttts and t3c, not {}",
            other.name()
        ))),
    }
}
