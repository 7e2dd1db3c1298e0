//! DE/rand/1/bin with bounce-back repair and greedy (elitist) selection.
//!
//! Trial vectors for a generation are drawn sequentially from one seeded
//! stream, scored in parallel, then selected in index order, so the result
//! does not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    /// Population size; `None` means 15 times the dimension.
    pub population_size: Option<usize>,
    pub max_iterations: usize,
    pub mutation_factor: f64,
    pub crossover_rate: f64,
    /// Stop as soon as the best objective drops below this value.
    pub success_threshold: f64,
    pub seed: u64,
    /// Per-parameter `[low, high]`; `None` uses the caller's defaults.
    pub bounds: Option<Vec<(f64, f64)>>,
    /// Model 2 only: derive `p_1..p_{n-1}` from the activation rates, `p_n`
    /// and the target instead of searching them freely.
    #[serde(default = "default_true")]
    pub derive_survival: bool,
}

fn default_true() -> bool {
    true
}

impl Default for DEConfig {
    fn default() -> Self {
        Self {
            population_size: None,
            max_iterations: 250,
            mutation_factor: 0.8,
            crossover_rate: 0.9,
            success_threshold: 1e-4,
            seed: 0,
            bounds: None,
            derive_survival: true,
        }
    }
}

impl DEConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn population_for(&self, dim: usize) -> usize {
        self.population_size.unwrap_or(15 * dim)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(np) = self.population_size {
            if np < 4 {
                return Err(Error::Config(format!(
                    "population_size must be at least 4, got {np}"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.mutation_factor > 0.0 && self.mutation_factor <= 2.0) {
            return Err(Error::Config(format!(
                "mutation_factor must lie in (0, 2], got {}",
                self.mutation_factor
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config(format!(
                "crossover_rate must lie in [0, 1], got {}",
                self.crossover_rate
            )));
        }
        if !self.success_threshold.is_finite() {
            return Err(Error::Config("success_threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DEOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Generations executed after the initial population.
    pub iterations: usize,
    /// Best objective after initialization and after every generation.
    pub history: Vec<f64>,
}

fn bounce_back(value: f64, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    let reflected = if value < lo {
        lo + (lo - value)
    } else if value > hi {
        hi - (value - hi)
    } else {
        return value;
    };
    if (lo..=hi).contains(&reflected) {
        reflected
    } else {
        lo + rng.random::<f64>() * (hi - lo)
    }
}

fn score<F>(objective: &F, x: &[f64]) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let value = objective(x);
    if value.is_nan() {
        f64::INFINITY
    } else {
        value
    }
}

/// Minimizes `objective` over the box `bounds`.
pub fn differential_evolution<F>(
    objective: F,
    bounds: &[(f64, f64)],
    config: &DEConfig,
) -> Result<DEOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    differential_evolution_with_repair(objective, |_: &mut [f64]| {}, bounds, config)
}

/// Like [`differential_evolution`], but every candidate passes through
/// `repair` before it is scored. Repaired vectors replace the originals in
/// the population, so `repair` must keep them inside `bounds`.
pub fn differential_evolution_with_repair<F, R>(
    objective: F,
    repair: R,
    bounds: &[(f64, f64)],
    config: &DEConfig,
) -> Result<DEOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
    R: Fn(&mut [f64]),
{
    config.validate()?;
    let dim = bounds.len();
    if dim == 0 {
        return Err(Error::Config("empty search space".into()));
    }
    for &(lo, hi) in bounds {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("invalid bounds [{lo}, {hi}]")));
        }
    }
    let np = config.population_for(dim).max(4);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut population: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            let mut x: Vec<f64> = bounds
                .iter()
                .map(|&(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect();
            repair(&mut x);
            x
        })
        .collect();
    let mut fitness: Vec<f64> = population.par_iter().map(|x| score(&objective, x)).collect();

    let best_index = |fitness: &[f64]| {
        let mut best = 0;
        for (i, &f) in fitness.iter().enumerate() {
            if f < fitness[best] {
                best = i;
            }
        }
        best
    };

    let mut best = best_index(&fitness);
    let mut history = vec![fitness[best]];
    let mut iterations = 0;

    while iterations < config.max_iterations && fitness[best] >= config.success_threshold {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let mut pick = || loop {
                    let r = rng.random_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let r1 = pick();
                let r2 = loop {
                    let r = pick();
                    if r != r1 {
                        break r;
                    }
                };
                let r3 = loop {
                    let r = pick();
                    if r != r1 && r != r2 {
                        break r;
                    }
                };
                let forced = rng.random_range(0..dim);
                let mut trial = population[i].clone();
                for j in 0..dim {
                    if j == forced || rng.random::<f64>() < config.crossover_rate {
                        let mutant = population[r1][j]
                            + config.mutation_factor * (population[r2][j] - population[r3][j]);
                        let (lo, hi) = bounds[j];
                        trial[j] = bounce_back(mutant, lo, hi, &mut rng);
                    }
                }
                repair(&mut trial);
                trial
            })
            .collect();

        let trial_fitness: Vec<f64> = trials.par_iter().map(|x| score(&objective, x)).collect();

        for (i, (trial, f)) in trials.into_iter().zip(trial_fitness).enumerate() {
            if f <= fitness[i] {
                population[i] = trial;
                fitness[i] = f;
            }
        }
        best = best_index(&fitness);
        iterations += 1;
        history.push(fitness[best]);
    }

    Ok(DEOutcome {
        best: population[best].clone(),
        best_value: fitness[best],
        iterations,
        history,
    })
}
