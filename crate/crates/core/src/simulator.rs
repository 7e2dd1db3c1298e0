//! Agent-level simulation of the ageing process.
//!
//! Each agent only carries its group index. A step is synchronous: every
//! agent's fate depends on its start-of-step group. All randomness comes from
//! one seeded ChaCha stream, so a run is a pure function of its inputs.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{AgeDistribution, ModelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum InitialCondition {
    /// Largest-remainder apportionment of the target.
    #[default]
    Target,
    /// Equal group sizes (remainder to the youngest groups).
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_agents: usize,
    pub num_steps: usize,
    pub seed: u64,
    /// Steps discarded before averaging.
    pub burn_in: usize,
    pub record_trajectory: bool,
    #[serde(default)]
    pub initial: InitialCondition,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            num_agents: 10_000,
            num_steps: 350,
            seed: 0,
            burn_in: 300,
            record_trajectory: false,
            initial: InitialCondition::Target,
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_agents == 0 || self.num_steps == 0 {
            return Err(Error::Config(
                "num_agents and num_steps must be positive".into(),
            ));
        }
        if self.burn_in >= self.num_steps {
            return Err(Error::Config(format!(
                "burn_in ({}) must be smaller than num_steps ({})",
                self.burn_in, self.num_steps
            )));
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` agents over `proportions`.
///
/// Leftover agents go to the largest fractional parts, ties to the lower index.
pub fn apportion(proportions: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = proportions.iter().map(|p| p * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - quotas[i].floor();
        let fj = quotas[j] - quotas[j].floor();
        fj.total_cmp(&fi).then(i.cmp(&j))
    });
    let mut remaining = total.saturating_sub(assigned);
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}

/// A population of agents, each identified by its 0-based group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    agents: Vec<usize>,
    counts: Vec<usize>,
}

impl Population {
    pub fn from_counts(counts: &[usize]) -> Self {
        let agents = counts
            .iter()
            .enumerate()
            .flat_map(|(g, &c)| std::iter::repeat_n(g, c))
            .collect();
        Self {
            agents,
            counts: counts.to_vec(),
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn proportions(&self) -> Vec<f64> {
        let total = self.agents.len() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Advances one step; returns the number of deaths.
    ///
    /// With `alpha`, an agent in group `i` is active with probability
    /// `alpha[i]` and inactive agents skip the step. Active agents survive
    /// with probability `p[i]`: survivors move up one group (or stay in the
    /// last), deaths are replaced by newcomers in group 0.
    pub fn step<R: Rng>(&mut self, p: &[f64], alpha: Option<&[f64]>, rng: &mut R) -> usize {
        let last = self.counts.len() - 1;
        let mut deaths = 0;
        for group in self.agents.iter_mut() {
            let g = *group;
            if let Some(alpha) = alpha {
                if rng.random::<f64>() >= alpha[g] {
                    continue;
                }
            }
            let next = if rng.random::<f64>() < p[g] {
                (g + 1).min(last)
            } else {
                deaths += 1;
                0
            };
            if next != g {
                self.counts[g] -= 1;
                self.counts[next] += 1;
                *group = next;
            }
        }
        deaths
    }
}

/// Starting population for a run.
pub fn initialize(target: &AgeDistribution, config: &SimConfig) -> Population {
    let counts = match config.initial {
        InitialCondition::Target => apportion(target.proportions(), config.num_agents),
        InitialCondition::Uniform => {
            let n = target.n();
            apportion(&vec![1.0 / n as f64; n], config.num_agents)
        }
    };
    Population::from_counts(&counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    /// Mean of the per-step proportions over the steps after burn-in.
    pub steady_estimate: Vec<f64>,
    pub final_snapshot: Vec<f64>,
    pub labels: Vec<String>,
    /// Per-step proportions, starting with the initial state, when recorded.
    pub trajectory: Option<Vec<Vec<f64>>>,
    pub total_deaths: u64,
    pub seed: u64,
    pub num_agents: usize,
    pub num_steps: usize,
}

impl SimResult {
    pub fn steady_distribution(&self) -> Result<AgeDistribution> {
        AgeDistribution::new(self.labels.clone(), self.steady_estimate.clone())
    }
}

/// Simulates `params` starting from `target` and averages the late steps.
pub fn run(target: &AgeDistribution, params: &ModelParams, config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    params.validate()?;
    let n = target.n();
    if params.n() != n {
        return Err(Error::LengthMismatch {
            what: "parameters vs target",
            expected: n,
            got: params.n(),
        });
    }
    let p = params.survival.as_slice();
    let alpha = params.activation.as_ref().map(|a| a.as_slice());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population = initialize(target, config);
    let mut trajectory = config
        .record_trajectory
        .then(|| vec![population.proportions()]);
    let mut sums = vec![0u64; n];
    let mut total_deaths = 0u64;

    for step in 1..=config.num_steps {
        total_deaths += population.step(p, alpha, &mut rng) as u64;
        debug_assert_eq!(population.counts().iter().sum::<usize>(), config.num_agents);
        if step > config.burn_in {
            for (s, &c) in sums.iter_mut().zip(population.counts()) {
                *s += c as u64;
            }
        }
        if let Some(t) = trajectory.as_mut() {
            t.push(population.proportions());
        }
    }

    let samples = (config.num_steps - config.burn_in) as f64 * config.num_agents as f64;
    Ok(SimResult {
        steady_estimate: sums.iter().map(|&s| s as f64 / samples).collect(),
        final_snapshot: population.proportions(),
        labels: target.labels().to_vec(),
        trajectory,
        total_deaths,
        seed: config.seed,
        num_agents: config.num_agents,
        num_steps: config.num_steps,
    })
}

/// Writes a trajectory as CSV: `step` then one column per group label.
pub fn write_trajectory_csv<W: Write>(
    writer: W,
    labels: &[String],
    trajectory: &[Vec<f64>],
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let mut header = vec!["step".to_string()];
    header.extend(labels.iter().cloned());
    out.write_record(&header)?;
    for (step, row) in trajectory.iter().enumerate() {
        let mut record = vec![step.to_string()];
        record.extend(row.iter().map(|v| crate::io::format_sig(*v)));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{ModelKind, SurvivalVector};

    #[test]
    fn apportion_examples() {
        assert_eq!(apportion(&[0.5, 0.3, 0.2], 10), vec![5, 3, 2]);
        assert_eq!(apportion(&[0.5, 0.3, 0.2], 10_000), vec![5000, 3000, 2000]);
        let third = 1.0 / 3.0;
        assert_eq!(apportion(&[third, third, third], 10), vec![4, 3, 3]);
    }

    #[test]
    fn deterministic_step_trace() {
        let mut pop = Population::from_counts(&[5, 3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let deaths = pop.step(&[1.0, 1.0, 0.0], None, &mut rng);
        assert_eq!(pop.counts(), &[2, 5, 3]);
        assert_eq!(deaths, 2);
        assert_eq!(pop.num_agents(), 10);
    }

    #[test]
    fn last_group_survivors_stay() {
        let mut pop = Population::from_counts(&[0, 0, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        pop.step(&[1.0, 1.0, 1.0], None, &mut rng);
        assert_eq!(pop.counts(), &[0, 0, 4]);
    }

    #[test]
    fn minimal_activation_mostly_freezes() {
        let mut pop = Population::from_counts(&[100, 100, 100]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alpha = [1e-3; 3];
        pop.step(&[0.0, 0.0, 0.0], Some(&alpha), &mut rng);
        // nearly every agent is inactive, so almost nobody moves
        assert!(pop.counts()[0] < 110);
        assert_eq!(pop.num_agents(), 300);
    }

    #[test]
    fn config_validation() {
        let mut config = SimConfig::default();
        config.burn_in = 350;
        assert!(config.validate().is_err());
        config.burn_in = 0;
        config.num_agents = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn run_rejects_mismatched_params() {
        let target = AgeDistribution::from_weights(&[0.4, 0.3, 0.2, 0.1]).unwrap();
        let params = ModelParams::new(
            ModelKind::Model1,
            SurvivalVector::new(vec![0.6, 0.4, 0.4]).unwrap(),
            None,
        )
        .unwrap();
        assert!(run(&target, &params, &SimConfig::default()).is_err());
    }
}
