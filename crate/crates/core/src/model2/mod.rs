//! The ageing process with activation rates.
//!
//! An agent in group `i` takes part in the survival draw only when active,
//! which happens with probability `alpha_i` per step. Inactive agents stay put.
//! The steady state then satisfies `alpha_{i+1} N_{i+1} = alpha_i p_i N_i` for
//! intermediate groups, which lets non-monotone shapes emerge. There is no
//! closed form for the rates, so [`optimize`] searches `(p, alpha)` with
//! differential evolution.

mod de;

pub use de::{differential_evolution, differential_evolution_with_repair, DEConfig, DEOutcome};

use serde::{Deserialize, Serialize};

use crate::distributions::{
    mae, ActivationVector, AgeDistribution, SurvivalVector, ALPHA_MIN, P_LAST_MAX,
};
use crate::error::{Error, Result};
use crate::model1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model2Solution {
    pub survival: SurvivalVector,
    pub activation: ActivationVector,
    pub mae: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// Best MAE after initialization and after each generation.
    pub history: Vec<f64>,
}

/// Steady state reached under survival `p` and activation `alpha`.
pub fn steady_state2(p: &SurvivalVector, alpha: &ActivationVector) -> Result<AgeDistribution> {
    if p.len() != alpha.len() {
        return Err(Error::LengthMismatch {
            what: "activation",
            expected: p.len(),
            got: alpha.len(),
        });
    }
    model1::checked_steady_state(p.as_slice(), Some(alpha.as_slice()))
}

/// Default search box: `p_i` in `[0, 1 - 1e-9]`, `alpha_i` in `[ALPHA_MIN, 1]`.
pub fn default_bounds(n: usize) -> Vec<(f64, f64)> {
    let mut bounds = vec![(0.0, P_LAST_MAX); n];
    bounds.extend(std::iter::repeat_n((ALPHA_MIN, 1.0), n));
    bounds
}

fn check_bounds(bounds: &[(f64, f64)], n: usize) -> Result<()> {
    if bounds.len() != 2 * n {
        return Err(Error::LengthMismatch {
            what: "DE bounds",
            expected: 2 * n,
            got: bounds.len(),
        });
    }
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        let (min, max) = if j < n {
            (0.0, P_LAST_MAX)
        } else {
            (ALPHA_MIN, 1.0)
        };
        if lo < min || hi > max || lo > hi {
            return Err(Error::Config(format!(
                "bounds [{lo}, {hi}] for parameter {j} must lie within [{min}, {max}]"
            )));
        }
    }
    Ok(())
}

/// MAE between the steady state of a packed `(p, alpha)` vector and `target`.
///
/// Degenerate candidates (non-finite states) score infinity.
pub fn objective(x: &[f64], target: &[f64]) -> f64 {
    let n = target.len();
    let (p, alpha) = x.split_at(n);
    let state = model1::steady_state_proportions(p, Some(alpha));
    if state.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    mae(&state, target).unwrap_or(f64::INFINITY)
}

/// Overwrites `p_1..p_{n-1}` of a packed `(p, alpha)` vector with the values
/// the steady-state relations imply for `target`, clamped into `bounds`.
///
/// When no clamping is needed the candidate reproduces `target` exactly, so
/// the search only has to find activation rates and a `p_n` that keep every
/// implied probability inside its box.
pub fn derive_survival(x: &mut [f64], target: &[f64], bounds: &[(f64, f64)]) {
    let n = target.len();
    let (p, alpha) = x.split_at_mut(n);
    for i in 0..n - 2 {
        let implied = alpha[i + 1] * target[i + 1] / (alpha[i] * target[i]);
        p[i] = implied.clamp(bounds[i].0, bounds[i].1);
    }
    let implied = alpha[n - 1] * (1.0 - p[n - 1]) * target[n - 1] / (alpha[n - 2] * target[n - 2]);
    p[n - 2] = implied.clamp(bounds[n - 2].0, bounds[n - 2].1);
}

/// Searches survival and activation rates reproducing `target`.
///
/// Never fails on hard targets: a search that does not reach
/// `success_threshold` returns its best candidate with `converged = false`.
pub fn optimize(target: &AgeDistribution, config: &DEConfig) -> Result<Model2Solution> {
    let n = target.n();
    let bounds = match &config.bounds {
        Some(b) => {
            check_bounds(b, n)?;
            b.clone()
        }
        None => default_bounds(n),
    };
    let proportions = target.proportions();
    let score = |x: &[f64]| objective(x, proportions);
    let outcome = if config.derive_survival {
        let repair = |x: &mut [f64]| derive_survival(x, proportions, &bounds);
        differential_evolution_with_repair(score, repair, &bounds, config)?
    } else {
        differential_evolution(score, &bounds, config)?
    };
    let (p, alpha) = outcome.best.split_at(n);
    Ok(Model2Solution {
        survival: SurvivalVector::new(p.to_vec())?,
        activation: ActivationVector::new(alpha.to_vec())?,
        mae: outcome.best_value,
        iterations_used: outcome.iterations,
        converged: outcome.best_value < config.success_threshold,
        history: outcome.history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(p: &[f64]) -> SurvivalVector {
        SurvivalVector::new(p.to_vec()).unwrap()
    }

    fn av(a: &[f64]) -> ActivationVector {
        ActivationVector::new(a.to_vec()).unwrap()
    }

    #[test]
    fn hand_witness() {
        let d = steady_state2(&sv(&[0.8, 0.4, 0.2]), &av(&[1.0, 0.6, 0.4])).unwrap();
        let expected = [0.3, 0.4, 0.3];
        for (x, y) in d.proportions().iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn reduces_to_model1_with_unit_rates() {
        let p = sv(&[0.6, 0.4, 0.4]);
        let a = steady_state2(&p, &ActivationVector::ones(3)).unwrap();
        let b = model1::steady_state(&p).unwrap();
        assert_eq!(a, b);
        for (x, y) in a.proportions().iter().zip([0.5, 0.3, 0.2]) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn errors() {
        assert!(matches!(
            steady_state2(&sv(&[0.5, 0.5, 0.5]), &ActivationVector::ones(4)),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            model1::checked_steady_state(&[0.5, 0.5, 1.0], Some(&[1.0, 1.0, 1.0])),
            Err(Error::DegenerateLastGroup(_))
        ));
    }

    #[test]
    fn optimize_hump() {
        let target = AgeDistribution::from_weights(&[0.3, 0.4, 0.3]).unwrap();
        let sol = optimize(&target, &DEConfig::with_seed(1)).unwrap();
        assert!(sol.converged);
        assert!(sol.mae < 1e-4);
        let state = steady_state2(&sol.survival, &sol.activation).unwrap();
        for (x, y) in state.proportions().iter().zip(target.proportions()) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn optimize_monotone_and_deterministic() {
        let target = AgeDistribution::from_weights(&[0.5, 0.3, 0.2]).unwrap();
        let a = optimize(&target, &DEConfig::with_seed(9)).unwrap();
        let b = optimize(&target, &DEConfig::with_seed(9)).unwrap();
        assert!(a.converged);
        assert_eq!(a, b);
        assert!(a.iterations_used <= 250);
    }

    #[test]
    fn rejects_bad_bounds() {
        let target = AgeDistribution::from_weights(&[0.3, 0.4, 0.3]).unwrap();
        let mut config = DEConfig::default();
        config.bounds = Some(vec![(0.0, 1.0); 6]);
        assert!(optimize(&target, &config).is_err());
        config.bounds = Some(vec![(0.0, 0.5); 4]);
        assert!(optimize(&target, &config).is_err());
    }
}
