//! Transportation costs between arms: the empirical `W_n(i, j)` that drives
//! T3C and the Chernoff stopping rule, and the population cost `C_i` that
//! defines the optimal allocation.

use crate::bandit::RewardFamily;
use crate::error::{Error, Result};
use crate::posterior::PosteriorState;

/// Pull-count-weighted mean of arms `i` and `j`.
pub fn pooled_mean(state: &PosteriorState, i: usize, j: usize) -> Result<f64> {
    let (ti, tj) = (state.counts()[i], state.counts()[j]);
    if ti + tj == 0 {
        return Err(Error::Precondition(format!("arms {i} and {j} have no observations to pool")));
    }
    Ok((state.sums()[i] + state.sums()[j]) / (ti + tj) as f64)
}

/// `W_n(i, j)`: the evidence that arm `i` beats arm `j`.
///
/// Zero whenever `mu_j >= mu_i`; otherwise
/// `T_i d(mu_i; mu_ij) + T_j d(mu_j; mu_ij)` with `mu_ij` the pooled mean.
pub fn transportation_cost(state: &PosteriorState, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::InvalidArgument(format!("transportation cost needs two distinct arms, got {i} twice")));
    }
    let arms = state.arms();
    if i >= arms || j >= arms {
        return Err(Error::ArmOutOfRange { arm: i.max(j), arms });
    }
    let (ti, tj) = (state.counts()[i], state.counts()[j]);
    if ti == 0 || tj == 0 {
        return Err(Error::Precondition(format!("arms {i} and {j} must both be observed")));
    }
    Ok(cost_unchecked(state, i, j))
}

/// [`transportation_cost`] without argument validation; callers guarantee
/// distinct, observed arms.
pub(crate) fn cost_unchecked(state: &PosteriorState, i: usize, j: usize) -> f64 {
    let (ti, tj) = (state.counts()[i] as f64, state.counts()[j] as f64);
    let mi = state.sums()[i] / ti;
    let mj = state.sums()[j] / tj;
    if mj >= mi {
        return 0.0;
    }
    match state.family() {
        RewardFamily::Gaussian { sigma } => {
            let gap = mi - mj;
            gap * gap / (2.0 * sigma * sigma * (1.0 / ti + 1.0 / tj))
        }
        family @ RewardFamily::Bernoulli => {
            let pooled = (state.sums()[i] + state.sums()[j]) / (ti + tj);
            ti * family.kl(mi, pooled) + tj * family.kl(mj, pooled)
        }
    }
}

/// All pairwise costs `W_n(i, j)` of a state, with zero on the diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    arms: usize,
    costs: Vec<f64>,
}

impl CostMatrix {
    pub fn new(state: &PosteriorState) -> Result<Self> {
        if !state.all_pulled() {
            return Err(Error::Precondition("cost matrix needs every arm observed".into()));
        }
        let arms = state.arms();
        let mut costs = vec![0.0; arms * arms];
        for i in 0..arms {
            for j in 0..arms {
                if i != j {
                    costs[i * arms + j] = cost_unchecked(state, i, j);
                }
            }
        }
        Ok(CostMatrix { arms, costs })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.arms + j]
    }

    /// Row `i` of the matrix.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.costs[i * self.arms..(i + 1) * self.arms]
    }

    /// Arms `k != i` attaining `min_k W(i, k)` (exact ties).
    pub fn argmin_set(&self, i: usize) -> Vec<usize> {
        let min = (0..self.arms)
            .filter(|&k| k != i)
            .map(|k| self.get(i, k))
            .fold(f64::INFINITY, f64::min);
        (0..self.arms).filter(|&k| k != i && self.get(i, k) == min).collect()
    }
}

/// GLR statistic `Z_n = max_i min_{j != i} W_n(i, j)`.
pub fn glr_statistic(state: &PosteriorState) -> Result<f64> {
    if !state.all_pulled() {
        return Err(Error::Precondition("GLR statistic needs every arm observed".into()));
    }
    // Only the empirical leader can have a positive inner minimum, but the
    // full max-min keeps the definition literal and costs O(K^2).
    let arms = state.arms();
    let mut z = 0.0f64;
    for i in 0..arms {
        let inner = (0..arms)
            .filter(|&j| j != i)
            .map(|j| cost_unchecked(state, i, j))
            .fold(f64::INFINITY, f64::min);
        z = z.max(inner);
    }
    Ok(z)
}

/// Population cost `C_i(w_star, w_i) = min_x w_star d(mu_star; x) + w_i d(mu_i; x)`.
///
/// The minimizer is the weighted mean `(w_star mu_star + w_i mu_i)/(w_star + w_i)`.
/// Both weights zero gives zero.
pub fn population_cost(family: RewardFamily, mu_star: f64, mu_i: f64, w_star: f64, w_i: f64) -> Result<f64> {
    if !(mu_star > mu_i) {
        return Err(Error::Precondition(format!(
            "population cost needs mu_star > mu_i, got {mu_star} and {mu_i}"
        )));
    }
    if !(w_star >= 0.0 && w_i >= 0.0) {
        return Err(Error::InvalidArgument(format!("weights must be non-negative, got {w_star} and {w_i}")));
    }
    Ok(population_cost_unchecked(family, mu_star, mu_i, w_star, w_i))
}

pub(crate) fn population_cost_unchecked(family: RewardFamily, mu_star: f64, mu_i: f64, w_star: f64, w_i: f64) -> f64 {
    if w_star == 0.0 || w_i == 0.0 {
        return 0.0;
    }
    match family {
        RewardFamily::Gaussian { sigma } => {
            let gap = mu_star - mu_i;
            gap * gap / (2.0 * sigma * sigma * (1.0 / w_i + 1.0 / w_star))
        }
        RewardFamily::Bernoulli => {
            let x = (w_star * mu_star + w_i * mu_i) / (w_star + w_i);
            w_star * family.kl(mu_star, x) + w_i * family.kl(mu_i, x)
        }
    }
}
