//! The β-optimal allocation `ω^β`, its rate `Γ*_β`, and the unrestricted
//! optimum over β.
//!
//! With the best arm's share fixed at β, the optimal weights equalize the
//! population costs `C_i(β, ω_i)` across the sub-optimal arms. The general
//! solver inverts each `x ↦ C_i(β, x)` by bisection inside an outer bisection
//! on the common value; the Gaussian case reduces to a single bisection.

use serde::{Deserialize, Serialize};

use crate::bandit::RewardFamily;
use crate::error::{Error, Result};
use crate::special::golden_section_min;
use crate::transport::population_cost_unchecked;

/// Default relative tolerance on the equalized rate.
pub const DEFAULT_TOL: f64 = 1e-12;

const MAX_BISECTIONS: usize = 200;

/// Range searched for β*.
pub const BETA_SEARCH_RANGE: (f64, f64) = (1e-4, 1.0 - 1e-4);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Allocation over all arms, best arm included; sums to one.
    pub weights: Vec<f64>,
    /// `min_i C_i(β, ω_i)` over the sub-optimal arms.
    pub rate: f64,
    /// Weight of the best arm.
    pub beta: f64,
    /// `max_i C_i(β, ω_i) - min_i C_i(β, ω_i)`.
    pub residual: f64,
}

struct Problem<'a> {
    means: &'a [f64],
    family: RewardFamily,
    best: usize,
}

impl<'a> Problem<'a> {
    fn new(means: &'a [f64], family: RewardFamily) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 arms, got {}", means.len())));
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
        let best = crate::posterior::argmax_first(means);
        if means.iter().enumerate().any(|(i, &m)| i != best && m == means[best]) {
            return Err(Error::InvalidInstance(format!(
                "best arm is not unique (two arms share mean {})",
                means[best]
            )));
        }
        Ok(Problem { means, family, best })
    }

    fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.means.len()).filter(move |&i| i != self.best)
    }

    fn cost(&self, i: usize, beta: f64, w: f64) -> f64 {
        population_cost_unchecked(self.family, self.means[self.best], self.means[i], beta, w)
    }

    /// Normalizes raw sub-optimal weights to total mass `1 - beta` and
    /// reports the equalization of the result.
    fn finish(&self, beta: f64, raw: &[(usize, f64)]) -> AllocationResult {
        let total: f64 = raw.iter().map(|&(_, x)| x).sum();
        let scale = (1.0 - beta) / total;
        let mut weights = vec![0.0; self.means.len()];
        weights[self.best] = beta;
        for &(i, x) in raw {
            weights[i] = x * scale;
        }
        let costs: Vec<f64> = self.others().map(|i| self.cost(i, beta, weights[i])).collect();
        let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        AllocationResult {
            weights,
            rate: lo,
            beta,
            residual: hi - lo,
        }
    }

    fn two_arm(&self, beta: f64) -> Option<AllocationResult> {
        if self.means.len() != 2 {
            return None;
        }
        let other = 1 - self.best;
        let mut weights = vec![0.0; 2];
        weights[self.best] = beta;
        weights[other] = 1.0 - beta;
        Some(AllocationResult {
            rate: self.cost(other, beta, 1.0 - beta),
            weights,
            beta,
            residual: 0.0,
        })
    }

    /// `x_i(y)`: the weight at which `C_i(β, x) = y`, for `y` strictly below
    /// the supremum `β d(μ*; μ_i)`.
    fn invert(&self, i: usize, beta: f64, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        let mut grow = 0;
        while self.cost(i, beta, hi) <= y {
            hi *= 2.0;
            grow += 1;
            if grow > 1100 || !hi.is_finite() {
                return Err(Error::numerical(
                    "allocation",
                    format!("cannot bracket the weight of arm {i} for rate {y:e}"),
                ));
            }
        }
        Ok(self.invert_within(i, beta, y, MIN_WEIGHT, hi))
    }

    /// Bisection for `C_i(β, x) = y` on a bracket `[lo, hi]` known to hold
    /// the root, to machine precision. Midpoints are geometric while the
    /// bracket spans more than a factor of two.
    fn invert_within(&self, i: usize, beta: f64, y: f64, mut lo: f64, mut hi: f64) -> f64 {
        lo = lo.max(MIN_WEIGHT);
        for _ in 0..MAX_BISECTIONS {
            let mid = if hi > 2.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
            if mid <= lo || mid >= hi {
                break;
            }
            if self.cost(i, beta, mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Lower end of every inner bracket.
const MIN_WEIGHT: f64 = 1e-15;

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")));
    }
    Ok(())
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// `ω^β` and `Γ*_β` by the general double bisection, valid for both families.
///
/// The outer bisection runs on the common rate `y` over
/// `[0, β min_i d(μ*; μ_i))` until the bracket is narrower than `tol`
/// relative to its upper end, so tiny rates keep full precision; for
/// each trial `y` every sub-optimal weight is recovered by inverting
/// `C_i(β, ·)`, and `y` is raised while the weights still fit in `1 - β`.
pub fn optimal_allocation_beta(means: &[f64], family: RewardFamily, beta: f64, tol: f64) -> Result<AllocationResult> {
    let p = Problem::new(means, family)?;
    check_beta(beta)?;
    check_tol(tol)?;
    if let Some(r) = p.two_arm(beta) {
        return Ok(r);
    }
    let sup = p
        .others()
        .map(|i| beta * family.kl(means[p.best], means[i]))
        .fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = (0.0, sup * (1.0 - 1e-15));
    // x_i(y) increases with y, so the weights at the ends of the outer
    // bracket bracket every inner solve.
    let others: Vec<usize> = p.others().collect();
    let mut x_lo = vec![0.0; others.len()];
    let mut x_hi = others.iter().map(|&i| p.invert(i, beta, hi)).collect::<Result<Vec<_>>>()?;
    let mut x_mid = vec![0.0; others.len()];
    let mut iterations = 0;
    while hi - lo > tol * hi && iterations < MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        for (k, &i) in others.iter().enumerate() {
            x_mid[k] = p.invert_within(i, beta, mid, x_lo[k], x_hi[k]);
        }
        if x_mid.iter().sum::<f64>() < 1.0 - beta {
            lo = mid;
            x_lo.copy_from_slice(&x_mid);
        } else {
            hi = mid;
            x_hi.copy_from_slice(&x_mid);
        }
        iterations += 1;
    }
    if iterations == MAX_BISECTIONS {
        log::warn!("allocation bisection hit its iteration cap with bracket width {:e}", hi - lo);
    }
    let y = 0.5 * (lo + hi);
    let raw: Vec<(usize, f64)> = others
        .iter()
        .enumerate()
        .map(|(k, &i)| (i, p.invert_within(i, beta, y, x_lo[k], x_hi[k])))
        .collect();
    Ok(p.finish(beta, &raw))
}

/// Gaussian `ω^β` by a single bisection.
///
/// With reference arm `i` (smallest gap) and `x = 1/ω_i + 1/β`, equalization
/// gives `ω_j = 1/(a_ji x - 1/β)` with `a_ji = Δ_j²/Δ_i²`, and `x` solves
/// `Σ_j ω_j = 1 - β`. Then `Γ = Δ_i²/(2σ² x)`.
pub fn gaussian_fast_path(means: &[f64], sigma: f64, beta: f64, tol: f64) -> Result<AllocationResult> {
    let family = RewardFamily::gaussian(sigma)?;
    let p = Problem::new(means, family)?;
    check_beta(beta)?;
    check_tol(tol)?;
    if let Some(r) = p.two_arm(beta) {
        return Ok(r);
    }
    let top = means[p.best];
    let gap2 = |j: usize| (top - means[j]).powi(2);
    let reference = p
        .others()
        .min_by(|&a, &b| gap2(a).total_cmp(&gap2(b)))
        .expect("at least two sub-optimal arms");
    let ratios: Vec<(usize, f64)> = p.others().map(|j| (j, gap2(j) / gap2(reference))).collect();
    let inv_beta = 1.0 / beta;
    let mass = |x: f64| -> f64 { ratios.iter().map(|&(_, a)| 1.0 / (a * x - inv_beta)).sum() };

    // mass decreases from +inf at x = 1/β to 0 as x grows
    let mut lo = inv_beta;
    let mut hi = 2.0 * inv_beta;
    while mass(hi) > 1.0 - beta {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::numerical("gaussian allocation", "cannot bracket the reference weight"));
        }
    }
    // Bisect to machine precision; the bracket halves in O(60) steps.
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 1.0 - beta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let raw: Vec<(usize, f64)> = ratios.iter().map(|&(j, a)| (j, 1.0 / (a * x - inv_beta))).collect();
    Ok(p.finish(beta, &raw))
}

/// `Γ*_β`, dispatching to the Gaussian fast path where it applies.
pub fn solve_beta(means: &[f64], family: RewardFamily, beta: f64, tol: f64) -> Result<AllocationResult> {
    match family {
        RewardFamily::Gaussian { sigma } => gaussian_fast_path(means, sigma, beta, tol),
        RewardFamily::Bernoulli => optimal_allocation_beta(means, family, beta, tol),
    }
}

/// `Γ* = max_β Γ*_β` by golden-section search over β, to `tol` in β.
pub fn optimal_allocation(means: &[f64], family: RewardFamily, tol: f64) -> Result<AllocationResult> {
    Problem::new(means, family)?;
    check_tol(tol)?;
    let mut failure = None;
    let neg_rate = |b: f64| match solve_beta(means, family, b, DEFAULT_TOL) {
        Ok(r) => -r.rate,
        Err(e) => {
            failure.get_or_insert(e);
            f64::INFINITY
        }
    };
    let (beta, _) = golden_section_min(neg_rate, BETA_SEARCH_RANGE.0, BETA_SEARCH_RANGE.1, tol);
    if let Some(e) = failure {
        return Err(e);
    }
    solve_beta(means, family, beta, DEFAULT_TOL)
}

/// Grid check of the golden-section optimum: evaluates `Γ*_β` at
/// β = 0.01, ..., 0.99 and returns the best grid point if it beats `found`
/// by more than `tol`, logging a warning.
pub fn check_beta_grid(means: &[f64], family: RewardFamily, found: &AllocationResult, tol: f64) -> Result<Option<AllocationResult>> {
    let mut best: Option<AllocationResult> = None;
    for k in 1..100 {
        let r = solve_beta(means, family, k as f64 / 100.0, DEFAULT_TOL)?;
        if best.as_ref().is_none_or(|b| r.rate > b.rate) {
            best = Some(r);
        }
    }
    let best = best.expect("grid is non-empty");
    if best.rate > found.rate + tol {
        log::warn!(
            "beta grid point {} gives rate {:e}, above the golden-section optimum {:e} at beta {}",
            best.beta,
            best.rate,
            found.rate,
            found.beta
        );
        return Ok(Some(best));
    }
    Ok(None)
}

/// Largest arm count accepted by [`brute_force_gamma`].
pub const BRUTE_FORCE_MAX_ARMS: usize = 6;

/// `max_ω min_i C_i(β, ω_i)` over a grid of the simplex slice `ω_{I*} = β`.
///
/// All but one sub-optimal weight range over positive multiples of
/// `grid_step`; the last takes the remaining mass. A validation oracle,
/// exponential in the number of arms.
pub fn brute_force_gamma(means: &[f64], family: RewardFamily, beta: f64, grid_step: f64) -> Result<f64> {
    let p = Problem::new(means, family)?;
    check_beta(beta)?;
    if means.len() > BRUTE_FORCE_MAX_ARMS {
        return Err(Error::InvalidArgument(format!(
            "brute force is limited to {BRUTE_FORCE_MAX_ARMS} arms, got {}",
            means.len()
        )));
    }
    if !(grid_step > 0.0 && grid_step < 1.0 - beta) {
        return Err(Error::InvalidArgument(format!("grid step must lie in (0, 1 - beta), got {grid_step}")));
    }
    let others: Vec<usize> = p.others().collect();
    let (free, last) = others.split_at(others.len() - 1);
    let last = last[0];
    let mass = 1.0 - beta;
    let steps = (mass / grid_step).floor() as usize;
    // costs on the grid, shared by the free coordinates
    let table: Vec<Vec<f64>> = free
        .iter()
        .map(|&i| (0..=steps).map(|k| p.cost(i, beta, k as f64 * grid_step)).collect())
        .collect();

    fn search(
        p: &Problem,
        table: &[Vec<f64>],
        depth: usize,
        used: usize,
        floor: f64,
        ctx: (usize, f64, f64, f64),
        best: &mut f64,
    ) {
        let (last, beta, mass, step) = ctx;
        if floor <= *best {
            return;
        }
        if depth == table.len() {
            let rest = mass - used as f64 * step;
            if rest > 0.0 {
                let v = floor.min(p.cost(last, beta, rest));
                if v > *best {
                    *best = v;
                }
            }
            return;
        }
        let mut k = 1;
        while (used + k) as f64 * step < mass {
            search(p, table, depth + 1, used + k, floor.min(table[depth][k]), ctx, best);
            k += 1;
        }
    }

    let mut best = 0.0;
    search(&p, &table, 0, 0, f64::INFINITY, (last, beta, mass, grid_step), &mut best);
    Ok(best)
}
