use serde::{Deserialize, Serialize};

use crate::allocation::AllocationResult;
use crate::error::{Error, Result};

use super::experiment::TracePoint;

/// Fewest trace points [`convergence_diagnostics`] accepts.
pub const MIN_TRACE_POINTS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    /// Least-squares slope of `-ln(1 - a_{n,I*})` against `n` over the last
    /// half of the trace.
    pub slope: f64,
    /// `max_i |T_{n,i}/n - ω_i|` at the last trace point.
    pub tracking_error: f64,
    pub final_n: u64,
    /// Points entering the slope fit.
    pub points_used: usize,
}

/// `max_i |proportions_i - weights_i|`.
pub fn tracking_error(proportions: &[f64], weights: &[f64]) -> f64 {
    proportions
        .iter()
        .zip(weights)
        .map(|(p, w)| (p - w).abs())
        .fold(0.0, f64::max)
}

/// Empirical convergence rates of a run against the allocation it should
/// approach.
pub fn convergence_diagnostics(trace: &[TracePoint], allocation: &AllocationResult) -> Result<ConvergenceDiagnostics> {
    if trace.len() < MIN_TRACE_POINTS {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_TRACE_POINTS} trace points, got {}",
            trace.len()
        )));
    }
    let last = trace.last().expect("trace is non-empty");
    if last.proportions.len() != allocation.weights.len() {
        return Err(Error::InvalidArgument(format!(
            "trace has {} arms, allocation {}",
            last.proportions.len(),
            allocation.weights.len()
        )));
    }
    let tail: Vec<(f64, f64)> = trace[trace.len() / 2..]
        .iter()
        .map(|p| (p.n as f64, -p.log_one_minus_a_best))
        .filter(|(_, y)| y.is_finite())
        .collect();
    if tail.len() < 2 {
        return Err(Error::InsufficientData("fewer than two finite points in the second half".into()));
    }
    let m = tail.len() as f64;
    let mx = tail.iter().map(|p| p.0).sum::<f64>() / m;
    let my = tail.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = tail.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = tail.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InsufficientData("all points share one n".into()));
    }
    Ok(ConvergenceDiagnostics {
        slope: sxy / sxx,
        tracking_error: tracking_error(&last.proportions, &allocation.weights),
        final_n: last.n,
        points_used: tail.len(),
    })
}

/// Pulls arms deterministically so as to track `weights`: each step plays
/// `argmax_i (n + 1) ω_i - T_i` (lowest index on ties). Returns the
/// proportions `T_n / n` every `stride` steps up to `horizon`.
pub fn replay_allocation(weights: &[f64], horizon: u64, stride: u64) -> Result<Vec<(u64, Vec<f64>)>> {
    if weights.is_empty() || stride == 0 {
        return Err(Error::InvalidArgument("need weights and a positive stride".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument("weights must be a probability vector".into()));
    }
    let mut counts = vec![0u64; weights.len()];
    let mut out = Vec::new();
    for n in 0..horizon {
        let next = (n + 1) as f64;
        let deficit: Vec<f64> = weights.iter().zip(&counts).map(|(w, &t)| next * w - t as f64).collect();
        let arm = crate::posterior::argmax_first(&deficit);
        counts[arm] += 1;
        if (n + 1) % stride == 0 {
            out.push((n + 1, counts.iter().map(|&t| t as f64 / next).collect()));
        }
    }
    Ok(out)
}
