//! Bandit instances, reward generation and the divergences between reward
//! distributions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap between the two largest means below which construction logs a warning.
pub const NEAR_TIE_GAP: f64 = 1e-12;

/// Reward distribution family shared by all arms of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum RewardFamily {
    /// Gaussian rewards with known, common standard deviation.
    Gaussian { sigma: f64 },
    Bernoulli,
}

impl RewardFamily {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "gaussian sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(RewardFamily::Gaussian { sigma })
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self, RewardFamily::Gaussian { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RewardFamily::Gaussian { sigma } => RewardFamily::gaussian(sigma).map(|_| ()),
            RewardFamily::Bernoulli => Ok(()),
        }
    }

    /// KL divergence `d(mu1; mu2)` between the members of this family with
    /// the given means. See [`kl_div`].
    pub fn kl(&self, mu1: f64, mu2: f64) -> f64 {
        kl_div(*self, mu1, mu2)
    }
}

/// Binary relative entropy `kl(p; q)` with the convention `0 ln 0 = 0`.
///
/// Returns `f64::INFINITY` when `q` sits on the boundary of `[0, 1]` and
/// `p != q`: the divergence is genuinely infinite there, and minimizers
/// downstream treat it as such.
pub fn kl_bernoulli(p: f64, q: f64) -> f64 {
    if p == q {
        return 0.0;
    }
    if q <= 0.0 || q >= 1.0 {
        return f64::INFINITY;
    }
    let mut kl = 0.0;
    if p > 0.0 {
        kl += p * (p / q).ln();
    }
    if p < 1.0 {
        kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    }
    // rounding can push tiny divergences slightly negative
    kl.max(0.0)
}

/// KL divergence between the two members of `family` with means `mu1` and
/// `mu2`.
///
/// Gaussian: `(mu1 - mu2)^2 / (2 sigma^2)`. Bernoulli: [`kl_bernoulli`],
/// including its `+inf` signal for a boundary second argument.
pub fn kl_div(family: RewardFamily, mu1: f64, mu2: f64) -> f64 {
    match family {
        RewardFamily::Gaussian { sigma } => {
            let diff = mu1 - mu2;
            diff * diff / (2.0 * sigma * sigma)
        }
        RewardFamily::Bernoulli => kl_bernoulli(mu1, mu2),
    }
}

#[derive(Debug, Clone, Deserialize)]
struct RawInstance {
    family: RewardFamily,
    means: Vec<f64>,
}

/// Standard benchmark mean vectors.
pub mod presets {
    /// Five arms; the best (index 1) is well separated, two sub-optimal arms
    /// differ by only 1e-5.
    pub const MU1: [f64; 5] = [0.5, 0.9, 0.4, 0.45, 0.44999];
    /// Four arms with the best first and evenly shrinking gaps.
    pub const MU2: [f64; 4] = [1.0, 0.8, 0.75, 0.7];

    pub fn by_name(name: &str) -> Option<&'static [f64]> {
        match name {
            "mu1" => Some(&MU1),
            "mu2" => Some(&MU2),
            _ => None,
        }
    }
}

/// A K-armed bandit with a unique best arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInstance")]
pub struct BanditInstance {
    family: RewardFamily,
    means: Vec<f64>,
    #[serde(skip)]
    best: usize,
}

impl TryFrom<RawInstance> for BanditInstance {
    type Error = Error;

    fn try_from(raw: RawInstance) -> Result<Self> {
        BanditInstance::new(raw.family, raw.means)
    }
}

impl BanditInstance {
    pub fn new(family: RewardFamily, means: Vec<f64>) -> Result<Self> {
        family.validate()?;
        if means.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "need at least 2 arms, got {}",
                means.len()
            )));
        }
        if let Some(m) = means.iter().find(|m| !m.is_finite()) {
            return Err(Error::InvalidInstance(format!("non-finite mean {m}")));
        }
        if family == RewardFamily::Bernoulli {
            if let Some(m) = means.iter().find(|&&m| !(m > 0.0 && m < 1.0)) {
                return Err(Error::InvalidInstance(format!(
                    "bernoulli means must lie strictly inside (0, 1), got {m}"
                )));
            }
        }

        let (best, top) = means
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, m)| if m > acc.1 { (i, m) } else { acc });
        let runner_up = means
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &m)| m)
            .fold(f64::NEG_INFINITY, f64::max);
        if runner_up == top {
            return Err(Error::InvalidInstance(format!(
                "best arm is not unique (two arms share mean {top})"
            )));
        }
        if top - runner_up < NEAR_TIE_GAP {
            log::warn!(
                "top-two gap {:e} is below {NEAR_TIE_GAP:e}; identification will be extremely slow",
                top - runner_up
            );
        }

        Ok(BanditInstance { family, means, best })
    }

    pub fn gaussian(means: Vec<f64>, sigma: f64) -> Result<Self> {
        BanditInstance::new(RewardFamily::gaussian(sigma)?, means)
    }

    pub fn bernoulli(means: Vec<f64>) -> Result<Self> {
        BanditInstance::new(RewardFamily::Bernoulli, means)
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn arms(&self) -> usize {
        self.means.len()
    }

    /// The unique arm with the largest mean.
    pub fn best_arm(&self) -> usize {
        self.best
    }

    /// Draws one reward from `arm`.
    pub fn sample_reward<R: Rng + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<f64> {
        let mean = *self.means.get(arm).ok_or(Error::ArmOutOfRange {
            arm,
            arms: self.arms(),
        })?;
        Ok(match self.family {
            RewardFamily::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + sigma * z
            }
            RewardFamily::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        })
    }
}

/// Free-function form of [`BanditInstance::best_arm`].
pub fn best_arm(instance: &BanditInstance) -> usize {
    instance.best_arm()
}

/// Generator behind every [`RngStream`].
pub type StreamRng = ChaCha8Rng;

/// Identifies a reproducible stream of random numbers.
///
/// Two streams with the same `(seed, stream)` produce the same draws on
/// every platform. Distinct stream ids select disjoint ChaCha streams, so
/// replications keyed by stream id can run in any order or in parallel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}
