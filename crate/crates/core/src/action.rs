//! Optimal action probabilities `a_{n,i} = Pi_n(theta_i > max_{j != i} theta_j)`.
//!
//! Each probability is the one-dimensional integral
//!
//! ```text
//! a_i = ∫ pdf_i(x) prod_{j != i} cdf_j(x) dx
//! ```
//!
//! evaluated in log space so that probabilities far below `f64::MIN_POSITIVE`
//! (which is routine once posteriors concentrate) keep full relative
//! precision. The log-integrand is concave for both posterior families, so
//! it has a single mode: the integration window is centred on that mode and
//! extended on each side until the integrand has dropped by `e^-50`, then
//! integrated with adaptively bisected Gauss-Legendre panels, broken at each
//! arm's mean and at powers of two of its posterior sd. All arms share the
//! panels, so one pass evaluates every cdf once per node.

use serde::{Deserialize, Serialize};

use crate::bandit::RewardFamily;
use crate::error::{Error, Result};
use crate::posterior::{PosteriorParams, PosteriorState};
use crate::special::golden_section_min;
use crate::special::{gl20, ln_1m_exp, ln_norm_cdf, log_sum_exp};

/// Default absolute tolerance on each probability.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Drop in log-integrand beyond which the tails are discarded.
const WINDOW_LOG_DROP: f64 = 50.0;
const MAX_DEPTH: u32 = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionProbabilities {
    /// Normalized probabilities, summing to one.
    pub probs: Vec<f64>,
    /// Natural logs of the normalized probabilities.
    pub log_probs: Vec<f64>,
    /// `|sum_i a_i - 1|` before renormalization.
    pub normalization_defect: f64,
}

impl ActionProbabilities {
    fn from_log_unnormalized(log_a: Vec<f64>) -> Self {
        let total = log_sum_exp(log_a.iter().copied());
        let log_probs: Vec<f64> = log_a.iter().map(|l| l - total).collect();
        ActionProbabilities {
            probs: log_probs.iter().map(|l| l.exp()).collect(),
            log_probs,
            normalization_defect: total.exp_m1().abs(),
        }
    }

    /// Arm with the largest probability, lowest index on ties.
    pub fn argmax(&self) -> usize {
        crate::posterior::argmax_first(&self.log_probs)
    }

    /// `ln(1 - a_arm)`, computed from the other arms' mass so it stays
    /// accurate when `a_arm` rounds to one.
    pub fn log_complement(&self, arm: usize) -> f64 {
        log_sum_exp(
            self.log_probs
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != arm)
                .map(|(_, &l)| l),
        )
    }

    /// `1 - a_arm` without cancellation.
    pub fn complement(&self, arm: usize) -> f64 {
        self.log_complement(arm).exp()
    }
}

/// Posterior probability that each arm is optimal.
///
/// Requires a proper posterior for every arm. `tol` bounds the error of each
/// integral relative to its own value, which implies the absolute bound.
pub fn optimal_action_probabilities(state: &PosteriorState, tol: f64) -> Result<ActionProbabilities> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    let params = state.all_params()?;
    let log_a = if let (RewardFamily::Gaussian { .. }, 2) = (state.family(), params.len()) {
        two_arm_gaussian(&params)
    } else {
        let all: Vec<usize> = (0..params.len()).collect();
        log_quadrature_many(&params, &all, tol)?
    };
    Ok(ActionProbabilities::from_log_unnormalized(log_a))
}

/// `ln a_i` by quadrature, for every `i` in `arms`, without the final
/// renormalization. Used where only some of the probabilities are needed.
pub fn log_action_probabilities_of(state: &PosteriorState, arms: &[usize], tol: f64) -> Result<Vec<f64>> {
    let params = state.all_params()?;
    log_quadrature_many(&params, arms, tol)
}

/// Closed form for two Gaussian arms: `a_1 = Phi((mu_1 - mu_2) / s)`.
fn two_arm_gaussian(params: &[PosteriorParams]) -> Vec<f64> {
    let s = (params[0].variance() + params[1].variance()).sqrt();
    let z = (params[0].mean() - params[1].mean()) / s;
    vec![ln_norm_cdf(z), ln_norm_cdf(-z)]
}

struct Integrand<'a> {
    params: &'a [PosteriorParams],
    arm: usize,
}

impl Integrand<'_> {
    fn eval(&self, x: f64) -> Result<f64> {
        let mut v = self.params[self.arm].ln_pdf(x);
        if v == f64::NEG_INFINITY {
            return Ok(v);
        }
        for (j, p) in self.params.iter().enumerate() {
            if j != self.arm {
                v += p.ln_cdf(x)?;
                if v == f64::NEG_INFINITY {
                    break;
                }
            }
        }
        Ok(v)
    }
}

/// Every requested log-integrand at one point, sharing the cdf evaluations.
struct Joint<'a> {
    params: &'a [PosteriorParams],
    arms: &'a [usize],
    /// Peak of each requested log-integrand; values are returned relative
    /// to it.
    peaks: Vec<f64>,
}

impl Joint<'_> {
    fn eval_scaled(&self, x: f64, out: &mut [f64], ln_cdf: &mut [f64]) -> Result<()> {
        for (slot, p) in ln_cdf.iter_mut().zip(self.params) {
            *slot = p.ln_cdf(x)?;
        }
        // sum over j != i as prefix + suffix, avoiding cancellation
        for (o, (&i, &peak)) in out.iter_mut().zip(self.arms.iter().zip(&self.peaks)) {
            let others: f64 = ln_cdf[..i].iter().sum::<f64>() + ln_cdf[i + 1..].iter().sum::<f64>();
            let v = self.params[i].ln_pdf(x) + others;
            *o = if v == f64::NEG_INFINITY { 0.0 } else { (v - peak).exp() };
        }
        Ok(())
    }

    fn panel(&self, a: f64, b: f64, out: &mut [f64], scratch: &mut Scratch) -> Result<()> {
        let (nodes, weights) = gl20();
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        out.fill(0.0);
        for (x, w) in nodes.iter().zip(weights) {
            self.eval_scaled(mid + half * x, &mut scratch.values, &mut scratch.ln_cdf)?;
            for (o, v) in out.iter_mut().zip(&scratch.values) {
                *o += w * v;
            }
        }
        for o in out.iter_mut() {
            *o *= half;
        }
        Ok(())
    }
}

struct Scratch {
    values: Vec<f64>,
    ln_cdf: Vec<f64>,
}

/// Mode, peak value and `e^-50` window of one arm's log-integrand.
fn window(params: &[PosteriorParams], arm: usize) -> Result<(f64, f64, f64, f64)> {
    let f = Integrand { params, arm };
    let (sup_lo, sup_hi) = params[arm].support();
    let min_sd = params.iter().map(|p| p.sd()).fold(f64::INFINITY, f64::min);

    // Search bracket for the mode. Beyond 40 posterior sds of every arm the
    // log-integrand has long fallen below its value at the arms' means.
    let lo = params
        .iter()
        .map(|p| p.mean() - 40.0 * p.sd())
        .fold(f64::INFINITY, f64::min)
        .max(sup_lo);
    let hi = params
        .iter()
        .map(|p| p.mean() + 40.0 * p.sd())
        .fold(f64::NEG_INFINITY, f64::max)
        .min(sup_hi);

    let mut failure = None;
    let neg = |x: f64| match f.eval(x) {
        Ok(v) if v.is_nan() => f64::INFINITY,
        Ok(v) => -v,
        Err(e) => {
            failure.get_or_insert(e);
            f64::INFINITY
        }
    };
    let (mut mode, mut neg_peak) = golden_section_min(neg, lo, hi, 1e-3 * min_sd);
    if let Some(e) = failure {
        return Err(e);
    }
    // The density may peak on the boundary of its support (Beta with a
    // shape parameter of one).
    for edge in [lo, hi] {
        let v = f.eval(edge)?;
        if -v < neg_peak {
            neg_peak = -v;
            mode = edge;
        }
    }
    let peak = -neg_peak;
    if !peak.is_finite() {
        return Err(Error::numerical(
            "optimal action probability",
            format!("log-integrand of arm {arm} has no finite maximum (peak {peak})"),
        ));
    }

    let cutoff = peak - WINDOW_LOG_DROP;
    let step0 = min_sd.max(1e-300);
    let expand = |dir: f64, bound: f64| -> Result<f64> {
        let mut step = step0;
        loop {
            let x = mode + dir * step;
            if (dir < 0.0 && x <= bound) || (dir > 0.0 && x >= bound) {
                return Ok(bound);
            }
            if f.eval(x)? < cutoff {
                return Ok(x);
            }
            step *= 2.0;
        }
    };
    Ok((mode, peak, expand(-1.0, sup_lo)?, expand(1.0, sup_hi)?))
}

/// `ln ∫ exp(f(x)) dx` for the integrand of arm `arm`.
pub fn log_quadrature(params: &[PosteriorParams], arm: usize, tol: f64) -> Result<f64> {
    Ok(log_quadrature_many(params, &[arm], tol)?[0])
}

/// [`log_quadrature`] for several arms at once. The integrals share one set
/// of panels and nodes, so each cdf is evaluated once per node for all of
/// them; a panel is refined until every integral has converged on it.
pub fn log_quadrature_many(params: &[PosteriorParams], arms: &[usize], tol: f64) -> Result<Vec<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if arms.is_empty() {
        return Ok(Vec::new());
    }
    if let Some(&bad) = arms.iter().find(|&&i| i >= params.len()) {
        return Err(Error::ArmOutOfRange { arm: bad, arms: params.len() });
    }
    let mut peaks = Vec::with_capacity(arms.len());
    let mut breaks = Vec::new();
    let (mut left, mut right) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in arms {
        let (mode, peak, l, r) = window(params, i)?;
        peaks.push(peak);
        breaks.extend([l, mode, r]);
        left = left.min(l);
        right = right.max(r);
    }

    // Each factor varies on the scale of its own posterior sd. Without
    // breakpoints at that scale a panel much wider than a narrow arm's
    // transition can step straight over it, with both refinements agreeing.
    for p in params {
        let (m, sd) = (p.mean(), p.sd());
        for k in [0.0, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0, 8.0, -8.0, 16.0, -16.0] {
            let x = m + k * sd;
            if x > left && x < right {
                breaks.push(x);
            }
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let joint = Joint { params, arms, peaks };
    let m = arms.len();
    let mut scratch = Scratch {
        values: vec![0.0; m],
        ln_cdf: vec![0.0; params.len()],
    };
    let mut coarse = vec![0.0; m];
    let mut stack: Vec<(f64, f64, Vec<f64>, u32)> = Vec::with_capacity(breaks.len());
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let mut q = vec![0.0; m];
            joint.panel(w[0], w[1], &mut q, &mut scratch)?;
            for (c, v) in coarse.iter_mut().zip(&q) {
                *c += v;
            }
            stack.push((w[0], w[1], q, 0));
        }
    }
    if let Some(k) = coarse.iter().position(|c| !(*c > 0.0)) {
        return Err(Error::numerical(
            "optimal action probability",
            format!("empty integration window [{left}, {right}] for arm {}", arms[k]),
        ));
    }

    let width = right - left;
    let abs_tol: Vec<f64> = coarse.iter().map(|c| tol * c).collect();
    let mut total = vec![0.0; m];
    let (mut ql, mut qr) = (vec![0.0; m], vec![0.0; m]);
    while let Some((a, b, whole, depth)) = stack.pop() {
        let mid = 0.5 * (a + b);
        joint.panel(a, mid, &mut ql, &mut scratch)?;
        joint.panel(mid, b, &mut qr, &mut scratch)?;
        let converged = (0..m).all(|k| {
            let halves = ql[k] + qr[k];
            let allowed = (abs_tol[k] * (b - a) / width).max(f64::EPSILON * halves.abs());
            (halves - whole[k]).abs() <= allowed
        });
        if converged {
            for k in 0..m {
                total[k] += ql[k] + qr[k];
            }
        } else if depth >= MAX_DEPTH {
            return Err(Error::numerical(
                "optimal action probability",
                format!("quadrature for arms {arms:?} did not converge on [{a}, {b}] (window [{left}, {right}])"),
            ));
        } else {
            stack.push((a, mid, ql.clone(), depth + 1));
            stack.push((mid, b, qr.clone(), depth + 1));
        }
    }
    Ok(total.iter().zip(&joint.peaks).map(|(t, p)| p + t.ln()).collect())
}

/// `ln(1 - a)` from `ln a`, for callers holding only one log probability.
pub fn log_one_minus(log_a: f64) -> f64 {
    ln_1m_exp(log_a.min(0.0))
}
