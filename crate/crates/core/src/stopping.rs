//! Stopping thresholds and the Bayesian and Chernoff stopping rules.

use std::f64::consts::{E, PI};

use serde::{Deserialize, Serialize};

use crate::action::{log_quadrature, ActionProbabilities, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::posterior::{argmax_first, PosteriorParams, PosteriorState};
use crate::special::{ln_1m_exp, ln_norm_cdf};
use crate::transport::glr_statistic;

/// Which formula gives the Bayesian threshold `c_{n,δ}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdVariant {
    /// `1 - c = (1/√(2π)) exp(-(√d_{n,δ} + 1/√2)²)`, tied to the Chernoff threshold.
    #[default]
    #[serde(rename = "theorem1")]
    Theorem1,
    /// `1 - c = δ / (2n(K-1)√(2πe) exp(√(2 ln(2n(K-1)/δ))))`.
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StoppingRule {
    /// Stop once `max_i a_{n,i} >= c_{n,δ}`.
    Bayes {
        #[serde(default)]
        variant: ThresholdVariant,
    },
    /// Stop once `max_i min_j W_n(i, j) > d_{n,δ}`.
    Chernoff,
}

impl StoppingRule {
    /// Rounds between stopping checks when none is configured: the Bayesian
    /// rule needs a full quadrature per check, the GLR statistic is O(K²).
    pub fn default_check_every(&self) -> u64 {
        match self {
            StoppingRule::Bayes { .. } => 10,
            StoppingRule::Chernoff => 1,
        }
    }

    pub fn needs_action_probabilities(&self) -> bool {
        matches!(self, StoppingRule::Bayes { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingCriterion {
    pub rule: StoppingRule,
    pub delta: f64,
    #[serde(default)]
    pub arms: usize,
}

impl StoppingCriterion {
    pub fn new(rule: StoppingRule, delta: f64, arms: usize) -> Result<Self> {
        let c = StoppingCriterion { rule, delta, arms };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check(self.delta, self.arms)
    }

    /// The rule's threshold at round `n`: `c_{n,δ}` or `d_{n,δ}`.
    pub fn threshold(&self, n: u64) -> Result<f64> {
        match self.rule {
            StoppingRule::Bayes { variant } => bayes_threshold(n, self.delta, self.arms, variant),
            StoppingRule::Chernoff => chernoff_threshold(n, self.delta, self.arms),
        }
    }
}

fn check(delta: f64, arms: usize) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    if arms < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 arms, got {arms}")));
    }
    Ok(())
}

fn check_round(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("thresholds are defined from round 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopDecision {
    pub stop: bool,
    /// Recommended arm, present exactly when `stop` is set.
    pub recommendation: Option<usize>,
    /// `max_i a_{n,i}` or `Z_n`.
    pub statistic: f64,
    /// `c_{n,δ}` or `d_{n,δ}`.
    pub threshold: f64,
}

/// `C(x) = x + ln(max(x, 1))`, the calibration term of the Chernoff threshold.
fn calibration(x: f64) -> f64 {
    x + x.max(1.0).ln()
}

/// `d_{n,δ} = 4 ln(4 + ln n) + 2 C(ln((K-1)/δ)/2)`.
pub fn chernoff_threshold(n: u64, delta: f64, arms: usize) -> Result<f64> {
    check(delta, arms)?;
    check_round(n)?;
    let x = (((arms - 1) as f64) / delta).ln() / 2.0;
    Ok(4.0 * (4.0 + (n as f64).ln()).ln() + 2.0 * calibration(x))
}

/// `ln(1 - c_{n,δ})`, the form in which the Bayesian rule is evaluated:
/// `1 - c` is tiny and `c` itself rounds badly.
pub fn ln_bayes_complement(n: u64, delta: f64, arms: usize, variant: ThresholdVariant) -> Result<f64> {
    check(delta, arms)?;
    check_round(n)?;
    let ln_sqrt_2pi = 0.5 * (2.0 * PI).ln();
    Ok(match variant {
        ThresholdVariant::Theorem1 => {
            let d = chernoff_threshold(n, delta, arms)?;
            -ln_sqrt_2pi - (d.sqrt() + std::f64::consts::FRAC_1_SQRT_2).powi(2)
        }
        ThresholdVariant::ClosedForm => {
            let m = 2.0 * n as f64 * (arms - 1) as f64;
            delta.ln() - m.ln() - 0.5 * (2.0 * PI * E).ln() - (2.0 * (m / delta).ln()).sqrt()
        }
    })
}

/// `c_{n,δ}`.
pub fn bayes_threshold(n: u64, delta: f64, arms: usize, variant: ThresholdVariant) -> Result<f64> {
    Ok(-ln_bayes_complement(n, delta, arms, variant)?.exp_m1())
}

/// Bayesian decision with `ln(1 - c)` given: stop iff `1 - max_i a_i <= 1 - c`,
/// recommending `argmax_i a_i`.
pub fn bayes_decision(a: &ActionProbabilities, ln_one_minus_c: f64) -> StopDecision {
    let leader = a.argmax();
    let stop = a.log_complement(leader) <= ln_one_minus_c;
    StopDecision {
        stop,
        recommendation: stop.then_some(leader),
        statistic: a.probs[leader],
        threshold: -ln_one_minus_c.exp_m1(),
    }
}

/// Chernoff decision: stop iff `z > d`, recommending the empirical best arm
/// (lowest index on ties).
pub fn chernoff_decision(state: &PosteriorState, z: f64, d: f64) -> StopDecision {
    let stop = z > d;
    StopDecision {
        stop,
        recommendation: stop.then(|| argmax_first(&state.empirical_means())),
        statistic: z,
        threshold: d,
    }
}

/// Slack on the log scale before a pairwise bound is trusted to rule out
/// stopping; covers the quadrature tolerance.
const RULE_OUT_MARGIN: f64 = 1e-6;

/// True when pairwise posterior probabilities already show that no arm
/// reaches `a_i >= c`, so the Bayesian rule cannot stop and the K-arm
/// quadrature can be skipped.
///
/// With `b` the arm of largest posterior mean, `1 - a_b >= P(θ_j > θ_b)` for
/// every `j`, and `1 - a_i >= P(θ_b > θ_i)` for `i != b`. A `false` result
/// says nothing; the full rule must then be evaluated.
pub fn bayes_stop_ruled_out(state: &PosteriorState, ln_one_minus_c: f64) -> Result<bool> {
    let params = state.all_params()?;
    let means: Vec<f64> = params.iter().map(|p| p.mean()).collect();
    let b = argmax_first(&means);
    let limit = ln_one_minus_c + RULE_OUT_MARGIN;
    let mut leader_blocked = false;
    for (j, pj) in params.iter().enumerate() {
        if j == b {
            continue;
        }
        // ln P(θ_j > θ_b)
        let ln_p = match (pj, &params[b]) {
            (PosteriorParams::Gaussian { .. }, PosteriorParams::Gaussian { .. }) => {
                ln_norm_cdf((pj.mean() - params[b].mean()) / (pj.variance() + params[b].variance()).sqrt())
            }
            _ => log_quadrature(&[*pj, params[b]], 0, DEFAULT_TOL)?,
        };
        if ln_1m_exp(ln_p.min(0.0)) <= limit {
            return Ok(false);
        }
        leader_blocked |= ln_p > limit;
    }
    Ok(leader_blocked)
}

/// Applies `criterion` at the state's current round `n` (total pulls).
///
/// The Bayesian rule needs `a`; the Chernoff rule uses `z` when given and
/// computes the GLR statistic from `state` otherwise.
pub fn should_stop(
    criterion: &StoppingCriterion,
    state: &PosteriorState,
    a: Option<&ActionProbabilities>,
    z: Option<f64>,
) -> Result<StopDecision> {
    criterion.validate()?;
    if state.arms() != criterion.arms {
        return Err(Error::InvalidArgument(format!(
            "criterion is for {} arms, state has {}",
            criterion.arms,
            state.arms()
        )));
    }
    let n = state.total_pulls().max(1);
    match criterion.rule {
        StoppingRule::Bayes { variant } => {
            let a = a.ok_or_else(|| {
                Error::InvalidArgument("bayesian stopping needs the optimal action probabilities".into())
            })?;
            Ok(bayes_decision(a, ln_bayes_complement(n, criterion.delta, criterion.arms, variant)?))
        }
        StoppingRule::Chernoff => {
            let z = match z {
                Some(z) => z,
                None => glr_statistic(state)?,
            };
            Ok(chernoff_decision(state, z, chernoff_threshold(n, criterion.delta, criterion.arms)?))
        }
    }
}
