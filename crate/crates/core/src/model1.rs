//! Closed-form survival probabilities for the plain ageing process.
//!
//! Each step every agent in group `i` survives with probability `p_i`.
//! Survivors advance one group (the last group keeps its survivors) and every
//! death is replaced by a newcomer in the first group. In steady state the
//! group sizes satisfy `N_{i+1} = p_i N_i` for the intermediate groups and
//! `p_{n-1} N_{n-1} = (1 - p_n) N_n` for the last one, which leaves `p_n` free.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    index_labels, monotonicity_violations, AgeDistribution, SurvivalVector, P_LAST_MAX,
};
use crate::error::{Error, Result};

/// Max absolute row residual tolerated when checking a steady state against
/// the full balance system.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Admissible range of the last group's survival probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibleInterval {
    pub lower: f64,
    pub upper: f64,
}

impl FeasibleInterval {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, value: f64) -> bool {
        (self.lower..=self.upper).contains(&value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibleReport {
    /// 0-based indices of groups larger than their predecessor.
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Feasibility {
    Feasible(FeasibleInterval),
    Infeasible(InfeasibleReport),
}

/// How to pick the free parameter `p_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum FreeParam {
    Value(f64),
    #[default]
    Midpoint,
    SeededRandom(u64),
}

impl FreeParam {
    /// Short provenance tag recorded next to solved parameters.
    pub fn describe(&self) -> String {
        match self {
            FreeParam::Value(_) => "explicit".to_string(),
            FreeParam::Midpoint => "midpoint".to_string(),
            FreeParam::SeededRandom(seed) => format!("seeded_random:{seed}"),
        }
    }
}

fn interval_for(proportions: &[f64]) -> Feasibility {
    let violations = monotonicity_violations(proportions);
    if !violations.is_empty() {
        return Feasibility::Infeasible(InfeasibleReport { violations });
    }
    let n = proportions.len();
    let lower = (1.0 - proportions[n - 2] / proportions[n - 1]).max(0.0);
    Feasibility::Feasible(FeasibleInterval {
        lower,
        upper: P_LAST_MAX,
    })
}

pub fn feasibility(dist: &AgeDistribution) -> Feasibility {
    interval_for(dist.proportions())
}

fn choose_free_param(interval: FeasibleInterval, choice: FreeParam) -> Result<f64> {
    match choice {
        FreeParam::Value(value) => {
            // p_n = 1 would make the last group absorbing
            let value = if value > interval.upper && value <= 1.0 {
                interval.upper
            } else {
                value
            };
            if interval.contains(value) {
                Ok(value)
            } else {
                Err(Error::FreeParamOutOfRange {
                    value,
                    lower: interval.lower,
                    upper: interval.upper,
                })
            }
        }
        FreeParam::Midpoint => Ok(interval.midpoint()),
        FreeParam::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok(rng.random_range(interval.lower..=interval.upper))
        }
    }
}

/// Solves for survival probabilities from positive group weights.
///
/// The weights need not be normalized: only ratios of adjacent groups enter.
pub fn solve_weights(weights: &[f64], free_param: FreeParam) -> Result<Vec<f64>> {
    let n = weights.len();
    if n < 3 {
        return Err(Error::TooFewGroups { got: n });
    }
    let interval = match interval_for(weights) {
        Feasibility::Feasible(interval) => interval,
        Feasibility::Infeasible(report) => {
            return Err(Error::NotModel1Eligible {
                violations: report.violations,
            })
        }
    };
    let p_last = choose_free_param(interval, free_param)?;
    let mut p = Vec::with_capacity(n);
    for i in 0..n - 2 {
        p.push((weights[i + 1] / weights[i]).min(1.0));
    }
    p.push(((1.0 - p_last) * weights[n - 1] / weights[n - 2]).clamp(0.0, 1.0));
    p.push(p_last);
    Ok(p)
}

/// Survival probabilities whose steady state is exactly `dist`.
pub fn solve(dist: &AgeDistribution, free_param: FreeParam) -> Result<SurvivalVector> {
    SurvivalVector::new(solve_weights(dist.proportions(), free_param)?)
}

/// Unnormalized steady state by forward recursion from `N_1 = 1`.
///
/// With `alpha` the flows out of each group are scaled by its activation
/// rate; without it every rate is one.
pub(crate) fn steady_state_weights(p: &[f64], alpha: Option<&[f64]>) -> Vec<f64> {
    let n = p.len();
    let mut weights = Vec::with_capacity(n);
    weights.push(1.0);
    match alpha {
        None => {
            for i in 0..n - 2 {
                weights.push(p[i] * weights[i]);
            }
            weights.push(p[n - 2] * weights[n - 2] / (1.0 - p[n - 1]));
        }
        Some(a) => {
            for i in 0..n - 2 {
                weights.push(a[i] * p[i] / a[i + 1] * weights[i]);
            }
            weights.push(a[n - 2] * p[n - 2] * weights[n - 2] / (a[n - 1] * (1.0 - p[n - 1])));
        }
    }
    weights
}

/// Normalized steady state, possibly with empty groups; no residual check.
pub(crate) fn steady_state_proportions(p: &[f64], alpha: Option<&[f64]>) -> Vec<f64> {
    let mut weights = steady_state_weights(p, alpha);
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

/// Row residuals of the steady-state balance system at `state`.
///
/// Row 0 is the first group's balance (outflow of survivors against inflow of
/// replacements), rows `1..n` are the flow-through balances of the later groups.
pub fn balance_residuals(p: &[f64], alpha: Option<&[f64]>, state: &[f64]) -> Vec<f64> {
    let n = p.len();
    let rate = |i: usize| alpha.map_or(1.0, |a| a[i]);
    let mut rows = Vec::with_capacity(n);
    let deaths: f64 = (1..n).map(|j| rate(j) * (1.0 - p[j]) * state[j]).sum();
    rows.push(-rate(0) * p[0] * state[0] + deaths);
    for i in 1..n - 1 {
        rows.push(rate(i - 1) * p[i - 1] * state[i - 1] - rate(i) * state[i]);
    }
    rows.push(rate(n - 2) * p[n - 2] * state[n - 2] - rate(n - 1) * (1.0 - p[n - 1]) * state[n - 1]);
    rows
}

pub(crate) fn checked_steady_state(p: &[f64], alpha: Option<&[f64]>) -> Result<AgeDistribution> {
    let n = p.len();
    let last = p[n - 1];
    if last >= 1.0 {
        return Err(Error::DegenerateLastGroup(last));
    }
    let state = steady_state_proportions(p, alpha);
    if let Some(index) = state.iter().position(|&x| !x.is_finite() || x <= 0.0) {
        return Err(Error::DegenerateSteadyState { index });
    }
    let residual = balance_residuals(p, alpha, &state)
        .into_iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    if residual > RESIDUAL_TOLERANCE {
        return Err(Error::ResidualTooLarge {
            residual,
            tolerance: RESIDUAL_TOLERANCE,
        });
    }
    AgeDistribution::new(index_labels(n), state)
}

/// Steady-state distribution reached under survival probabilities `p`.
///
/// Groups are labelled `1..=n`; use [`AgeDistribution::with_labels`] to
/// attach real labels.
pub fn steady_state(p: &SurvivalVector) -> Result<AgeDistribution> {
    checked_steady_state(p.as_slice(), None)
}
