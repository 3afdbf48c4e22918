use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::action::{optimal_action_probabilities, DEFAULT_TOL};
use crate::bandit::RngStream;
use crate::error::{Error, Result};
use crate::posterior::PosteriorState;
use crate::rules::{SamplingRule, Selector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTiming {
    pub rule: String,
    pub iterations: u64,
    pub mean_s: f64,
    pub min_s: f64,
    pub max_s: f64,
    /// The arm chosen by every call, in order; a pure function of the seed.
    pub decisions: Vec<usize>,
}

/// Wall-clock cost of `iterations` selections at a frozen state.
///
/// Reward sampling and posterior updates are excluded. TTPS is charged for
/// the optimal action probabilities it consumes.
pub fn benchmark_step_time(rule: SamplingRule, state: &PosteriorState, iterations: u64, seed: u64) -> Result<StepTiming> {
    if iterations == 0 {
        return Err(Error::InvalidArgument("need at least one iteration".into()));
    }
    let mut selector = Selector::new(rule)?;
    let mut rng = RngStream::new(seed, 0).rng();
    let mut decisions = Vec::with_capacity(iterations as usize);
    let (mut total, mut min, mut max) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..iterations {
        let t0 = Instant::now();
        let a = if rule.needs_action_probabilities() {
            Some(optimal_action_probabilities(state, DEFAULT_TOL)?)
        } else {
            None
        };
        let trace = selector.select(state, a.as_ref(), &mut rng)?;
        let dt = t0.elapsed().as_secs_f64();
        total += dt;
        min = min.min(dt);
        max = max.max(dt);
        decisions.push(trace.arm);
    }
    Ok(StepTiming {
        rule: rule.name().to_string(),
        iterations,
        mean_s: total / iterations as f64,
        min_s: min,
        max_s: max,
        decisions,
    })
}
