//! Conjugate posterior bookkeeping, posterior sampling and the tail bounds
//! relating posterior probabilities to transportation costs.
//!
//! Gaussian arms use the improper flat prior, so the posterior of arm `i`
//! is `N(mu_i, sigma^2 / T_i)` with `mu_i` the empirical mean, and is only
//! defined once the arm has been pulled. Bernoulli arms use a uniform prior,
//! giving `Beta(S_i + 1, T_i - S_i + 1)`.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandit::{kl_bernoulli, RewardFamily};
use crate::error::{Error, Result};
use crate::special::{golden_section_min, ln_beta_pdf, ln_beta_reg, ln_norm_cdf, ln_norm_pdf};

/// Sufficient statistics of the posterior after a sequence of pulls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorState {
    family: RewardFamily,
    counts: Vec<u64>,
    sums: Vec<f64>,
    /// Rounds played since initialization ended.
    rounds: u64,
    /// Pulls spent on initialization (each arm once for Gaussian arms).
    init_offset: u64,
}

/// Parameters of the marginal posterior of one arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosteriorParams {
    Gaussian { mean: f64, variance: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl PosteriorParams {
    pub fn mean(&self) -> f64 {
        match *self {
            PosteriorParams::Gaussian { mean, .. } => mean,
            PosteriorParams::Beta { alpha, beta } => alpha / (alpha + beta),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PosteriorParams::Gaussian { variance, .. } => variance,
            PosteriorParams::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            PosteriorParams::Gaussian { mean, variance } => {
                let sd = variance.sqrt();
                ln_norm_pdf((x - mean) / sd) - sd.ln()
            }
            PosteriorParams::Beta { alpha, beta } => ln_beta_pdf(alpha, beta, x),
        }
    }

    pub fn ln_cdf(&self, x: f64) -> Result<f64> {
        match *self {
            PosteriorParams::Gaussian { mean, variance } => {
                Ok(ln_norm_cdf((x - mean) / variance.sqrt()))
            }
            PosteriorParams::Beta { alpha, beta } => ln_beta_reg(alpha, beta, x),
        }
    }

    /// Interval outside of which the density vanishes.
    pub fn support(&self) -> (f64, f64) {
        match self {
            PosteriorParams::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PosteriorParams::Beta { .. } => (0.0, 1.0),
        }
    }
}

impl PosteriorState {
    /// Fresh state with no observations.
    pub fn new(family: RewardFamily, arms: usize) -> Self {
        PosteriorState {
            family,
            counts: vec![0; arms],
            sums: vec![0.0; arms],
            rounds: 0,
            init_offset: 0,
        }
    }

    /// Builds a state directly from pull counts and reward sums, treating all
    /// pulls as initialization-free rounds.
    pub fn from_counts(family: RewardFamily, counts: Vec<u64>, sums: Vec<f64>) -> Result<Self> {
        if counts.len() != sums.len() || counts.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need matching counts and sums for at least 2 arms, got {} and {}",
                counts.len(),
                sums.len()
            )));
        }
        if family == RewardFamily::Bernoulli {
            for (i, (&t, &s)) in counts.iter().zip(&sums).enumerate() {
                if s.fract() != 0.0 || s < 0.0 || s > t as f64 {
                    return Err(Error::InvalidArgument(format!(
                        "arm {i}: bernoulli success count {s} incompatible with {t} pulls"
                    )));
                }
            }
        }
        let rounds = counts.iter().sum();
        Ok(PosteriorState {
            family,
            counts,
            sums,
            rounds,
            init_offset: 0,
        })
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    pub fn arms(&self) -> usize {
        self.counts.len()
    }

    /// Pull counts `T_{n,i}`.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// Reward sums `S_{n,i}`.
    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    /// Rounds played after initialization.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn init_offset(&self) -> u64 {
        self.init_offset
    }

    /// Total number of observations, initialization included.
    pub fn total_pulls(&self) -> u64 {
        self.rounds + self.init_offset
    }

    /// Moves every pull made so far into the initialization offset.
    pub fn end_initialization(&mut self) {
        self.init_offset += self.rounds;
        self.rounds = 0;
    }

    pub fn all_pulled(&self) -> bool {
        self.counts.iter().all(|&t| t > 0)
    }

    /// Empirical mean of `arm`; `NaN` before its first pull.
    pub fn empirical_mean(&self, arm: usize) -> f64 {
        self.sums[arm] / self.counts[arm] as f64
    }

    pub fn empirical_means(&self) -> Vec<f64> {
        (0..self.arms()).map(|i| self.empirical_mean(i)).collect()
    }

    /// Arm with the largest empirical mean, lowest index on ties.
    pub fn empirical_best(&self) -> usize {
        argmax_first(&self.empirical_means())
    }

    fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.arms() {
            return Err(Error::ArmOutOfRange {
                arm,
                arms: self.arms(),
            });
        }
        Ok(())
    }

    /// Records one observation of `arm`.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        self.check_arm(arm)?;
        match self.family {
            RewardFamily::Bernoulli if reward != 0.0 && reward != 1.0 => {
                return Err(Error::InvalidArgument(format!(
                    "bernoulli reward must be 0 or 1, got {reward}"
                )))
            }
            RewardFamily::Gaussian { .. } if !reward.is_finite() => {
                return Err(Error::InvalidArgument(format!("non-finite reward {reward}")))
            }
            _ => {}
        }
        self.counts[arm] += 1;
        self.sums[arm] += reward;
        self.rounds += 1;
        Ok(())
    }

    /// Value-returning form of [`PosteriorState::update`].
    pub fn updated(&self, arm: usize, reward: f64) -> Result<Self> {
        let mut next = self.clone();
        next.update(arm, reward)?;
        Ok(next)
    }

    /// Marginal posterior of `arm`.
    pub fn params(&self, arm: usize) -> Result<PosteriorParams> {
        self.check_arm(arm)?;
        let t = self.counts[arm];
        let s = self.sums[arm];
        match self.family {
            RewardFamily::Gaussian { sigma } => {
                if t == 0 {
                    return Err(Error::ImproperPosterior { arm });
                }
                Ok(PosteriorParams::Gaussian {
                    mean: s / t as f64,
                    variance: sigma * sigma / t as f64,
                })
            }
            RewardFamily::Bernoulli => Ok(PosteriorParams::Beta {
                alpha: s + 1.0,
                beta: t as f64 - s + 1.0,
            }),
        }
    }

    pub fn all_params(&self) -> Result<Vec<PosteriorParams>> {
        (0..self.arms()).map(|i| self.params(i)).collect()
    }

    /// Draws `theta ~ Pi_n`, one independent component per arm.
    pub fn sample_theta<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let sampler = PosteriorSampler::new(self)?;
        let mut theta = vec![0.0; self.arms()];
        sampler.sample_into(&mut theta, rng);
        Ok(theta)
    }

    /// Bounds on `Pi_n[theta_i >= theta_j]` for Gaussian arms with
    /// `mu_i <= mu_j`.
    pub fn gaussian_tail_bounds(&self, i: usize, j: usize) -> Result<TailBoundPair> {
        gaussian_tail_bounds(self, i, j)
    }
}

/// Posterior parameters prepared for repeated sampling.
#[derive(Debug, Clone)]
pub struct PosteriorSampler {
    arms: Vec<ArmSampler>,
}

#[derive(Debug, Clone)]
enum ArmSampler {
    Normal { mean: f64, sd: f64 },
    Beta(Beta<f64>),
}

impl PosteriorSampler {
    pub fn new(state: &PosteriorState) -> Result<Self> {
        let arms = state
            .all_params()?
            .into_iter()
            .map(|p| match p {
                PosteriorParams::Gaussian { mean, variance } => Ok(ArmSampler::Normal {
                    mean,
                    sd: variance.sqrt(),
                }),
                PosteriorParams::Beta { alpha, beta } => Beta::new(alpha, beta)
                    .map(ArmSampler::Beta)
                    .map_err(|e| Error::numerical("beta sampler", e.to_string())),
            })
            .collect::<Result<_>>()?;
        Ok(PosteriorSampler { arms })
    }

    pub fn arms(&self) -> usize {
        self.arms.len()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, theta: &mut [f64], rng: &mut R) {
        for (slot, arm) in theta.iter_mut().zip(&self.arms) {
            *slot = match arm {
                ArmSampler::Normal { mean, sd } => {
                    let z: f64 = rng.sample(StandardNormal);
                    mean + sd * z
                }
                ArmSampler::Beta(beta) => beta.sample(rng),
            };
        }
    }

    /// Samples `theta` and returns its argmax. Exact ties, which only arise
    /// through rounding, resolve to the lowest index.
    pub fn sample_argmax<R: Rng + ?Sized>(&self, scratch: &mut [f64], rng: &mut R) -> usize {
        self.sample_into(scratch, rng);
        argmax_first(scratch)
    }
}

pub(crate) fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Lower and upper bound on a probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl TailBoundPair {
    pub fn contains(&self, p: f64) -> bool {
        self.lower <= p && p <= self.upper
    }
}

/// Gaussian tail bounds on `Pi_n[theta_i >= theta_j]` when `mu_i <= mu_j`:
///
/// ```text
/// upper = 1/2 exp(-(mu_j - mu_i)^2 / (2 s^2))
/// lower = 1/sqrt(2 pi) exp(-(mu_j - mu_i + s)^2 / (2 s^2))
/// ```
///
/// with `s^2 = sigma^2/T_i + sigma^2/T_j`.
pub fn gaussian_tail_bounds(state: &PosteriorState, i: usize, j: usize) -> Result<TailBoundPair> {
    let RewardFamily::Gaussian { .. } = state.family() else {
        return Err(Error::Precondition("gaussian tail bounds need gaussian arms".into()));
    };
    let pi = state.params(i)?;
    let pj = state.params(j)?;
    let gap = pj.mean() - pi.mean();
    if gap < 0.0 {
        return Err(Error::Precondition(format!(
            "tail bounds need mu_{i} <= mu_{j}, got {} > {}",
            pi.mean(),
            pj.mean()
        )));
    }
    let s2 = pi.variance() + pj.variance();
    let s = s2.sqrt();
    let upper = 0.5 * (-gap * gap / (2.0 * s2)).exp();
    let lower = (-(gap + s).powi(2) / (2.0 * s2)).exp() / (2.0 * std::f64::consts::PI).sqrt();
    Ok(TailBoundPair { lower, upper })
}

/// Output of [`beta_tail_bound`]: `P[X > Y] <= bound = min(1, D e^{-C})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaTailBound {
    pub c: f64,
    pub d: f64,
    pub bound: f64,
}

/// `C_{a,b}(y) = (a + b - 1) kl((a - 1)/(a + b - 1); y)`.
pub fn beta_cost(a: u64, b: u64, y: f64) -> f64 {
    let n = (a + b - 1) as f64;
    n * kl_bernoulli((a - 1) as f64 / n, y)
}

/// Exponential bound on `P[X > Y]` for `X ~ Beta(a, b)`, `Y ~ Beta(c, d)`
/// whose modes-in-disguise satisfy `0 < (a-1)/(a+b-1) < (c-1)/(c+d-1)`.
pub fn beta_tail_bound(a: u64, b: u64, c: u64, d: u64) -> Result<BetaTailBound> {
    if a == 0 || b == 0 || c == 0 || d == 0 {
        return Err(Error::InvalidArgument("beta shapes must be at least 1".into()));
    }
    let lo = (a - 1) as f64 / (a + b - 1) as f64;
    let hi = (c - 1) as f64 / (c + d - 1) as f64;
    if !(0.0 < lo && lo < hi) {
        return Err(Error::Precondition(format!(
            "need 0 < (a-1)/(a+b-1) < (c-1)/(c+d-1), got {lo} and {hi}"
        )));
    }
    let objective = |y: f64| beta_cost(a, b, y) + beta_cost(c, d, y);
    let (_, c_min) = golden_section_min(objective, lo, hi, 1e-10);
    // the endpoints are admissible too and the objective is convex
    let c_min = c_min.min(objective(lo)).min(objective(hi));
    let d_val = 3.0 + beta_cost(a, b, hi).min(beta_cost(c, d, lo));
    Ok(BetaTailBound {
        c: c_min,
        d: d_val,
        bound: (d_val * (-c_min).exp()).min(1.0),
    })
}
