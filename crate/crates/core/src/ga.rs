//! Real-coded genetic algorithm baseline in the normalised search cube.

use rand::distributions::WeightedIndex;
use rand::prelude::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tsbo::BoxSpace;
use crate::tuning::{call, BoxedError, ObjectiveFailure, Stage, TuningResult};

#[derive(Debug, Error)]
pub enum GaError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Objective(Box<ObjectiveFailure>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub elite_fraction: f64,
    pub crossover_fraction: f64,
    /// Initial mutation std-dev in normalised units, halved every 5 generations.
    pub mutation_std: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 15,
            max_generations: 15,
            elite_fraction: 0.75,
            crossover_fraction: 0.8,
            mutation_std: 0.1,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        if self.population_size < 2 || self.max_generations == 0 {
            return Err(GaError::Config("need population >= 2 and at least one generation".into()));
        }
        for (name, v) in [("elite_fraction", self.elite_fraction), ("crossover_fraction", self.crossover_fraction)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(GaError::Config(format!("{name} {v} outside [0, 1]")));
            }
        }
        if !(self.mutation_std > 0.0 && self.mutation_std.is_finite()) {
            return Err(GaError::Config("mutation_std must be positive".into()));
        }
        Ok(())
    }

    /// Individuals carried unchanged into the next generation; at least one.
    pub fn elite_count(&self) -> usize {
        ((self.elite_fraction * self.population_size as f64).ceil() as usize).clamp(1, self.population_size)
    }

    pub fn evaluations(&self) -> usize {
        self.population_size * self.max_generations
    }

    fn mutation_std_at(&self, generation: usize) -> f64 {
        self.mutation_std * 0.5f64.powi((generation / 5) as i32)
    }
}

/// Population of one generation, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub individuals: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
}

/// Minimise `objective` over `space`; every individual of every generation is
/// evaluated, elites included.
pub fn ga_minimize<F, E>(objective: F, space: &BoxSpace, cfg: &GaConfig) -> Result<TuningResult, GaError>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: Into<BoxedError>,
{
    ga_minimize_with_history(objective, space, cfg).map(|(r, _)| r)
}

/// [`ga_minimize`] that also returns every sorted generation.
pub fn ga_minimize_with_history<F, E>(
    mut objective: F,
    space: &BoxSpace,
    cfg: &GaConfig,
) -> Result<(TuningResult, Vec<Generation>), GaError>
where
    F: FnMut(&[f64]) -> Result<f64, E>,
    E: Into<BoxedError>,
{
    cfg.validate()?;
    let d = space.dim();
    let n = cfg.population_size;
    let n_elite = cfg.elite_count();
    let n_cross = ((cfg.crossover_fraction * (n - n_elite) as f64).round() as usize).min(n - n_elite);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut result = TuningResult::empty();
    let mut history = Vec::with_capacity(cfg.max_generations);

    let mut population: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0.0..=1.0)).collect()).collect();
    // rank weights: best gets n, worst gets 1
    let rank_weights = WeightedIndex::new((1..=n).rev()).expect("positive weights");

    for generation in 0..cfg.max_generations {
        let mut scored = Vec::with_capacity(n);
        for u in population.drain(..) {
            let q = space.denormalize(&u);
            let j = call(&mut objective, &q).map_err(|source| {
                GaError::Objective(Box::new(ObjectiveFailure { source, partial: result.clone() }))
            })?;
            result.record(Stage::Genetic, None, q, j);
            scored.push((u, j));
        }
        scored.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (individuals, fitness): (Vec<_>, Vec<_>) = scored.into_iter().unzip();
        history.push(Generation { individuals: individuals.clone(), fitness });

        if generation + 1 == cfg.max_generations {
            break;
        }
        let sigma = cfg.mutation_std_at(generation + 1);
        let mutation = Normal::new(0.0, sigma).expect("positive std");
        let mut next: Vec<Vec<f64>> = individuals[..n_elite].to_vec();
        for k in 0..n - n_elite {
            let p1 = &individuals[rank_weights.sample(&mut rng)];
            let child: Vec<f64> = if k < n_cross {
                let p2 = &individuals[rank_weights.sample(&mut rng)];
                // BLX-0.5: uniform on the parents' span widened by half on each side
                p1.iter()
                    .zip(p2)
                    .map(|(a, b)| {
                        let gamma = rng.gen_range(-0.5..=1.5);
                        (a + gamma * (b - a)).clamp(0.0, 1.0)
                    })
                    .collect()
            } else {
                p1.iter().map(|a| (a + mutation.sample(&mut rng)).clamp(0.0, 1.0)).collect()
            };
            next.push(child);
        }
        population = next;
    }
    Ok((result, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elite_count_rounds_up() {
        assert_eq!(GaConfig::default().elite_count(), 12);
        assert_eq!(GaConfig { elite_fraction: 0.0, ..GaConfig::default() }.elite_count(), 1);
        assert_eq!(GaConfig::default().evaluations(), 225);
    }

    #[test]
    fn mutation_schedule_halves() {
        let c = GaConfig::default();
        assert_eq!(c.mutation_std_at(4), 0.1);
        assert_eq!(c.mutation_std_at(5), 0.05);
        assert_eq!(c.mutation_std_at(14), 0.025);
    }

    #[test]
    fn config_validation() {
        assert!(GaConfig { population_size: 1, ..GaConfig::default() }.validate().is_err());
        assert!(GaConfig { crossover_fraction: 1.5, ..GaConfig::default() }.validate().is_err());
        assert!(serde_json::from_str::<GaConfig>(r#"{"elite_count": 2}"#).is_err());
    }
}
