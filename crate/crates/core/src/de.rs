//! Differential evolution, DE/rand/1/bin, with generation-synchronous
//! replacement.
//!
//! Trial vectors for a whole generation are built from the parent
//! population before any of them is scored, so trial evaluation order never
//! changes which trials are produced.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{EvalError, Objective, SearchOutcome, StopReason, Step, Tracker};
use crate::perturbation::Bounds;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeParams {
    pub population: usize,
    /// Mutation factor `F`.
    pub mutation: f64,
    /// Crossover rate `CR`.
    pub crossover: f64,
    /// Generation cap; `None` means `budget / population`.
    pub max_generations: Option<u64>,
}

impl Default for DeParams {
    fn default() -> Self {
        Self { population: 100, mutation: 0.5, crossover: 0.7, max_generations: None }
    }
}

impl DeParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 {
            return Err(Error::InvalidParameter(format!(
                "population {} < 4",
                self.population
            )));
        }
        if !(self.mutation > 0.0 && self.mutation <= 2.0) {
            return Err(Error::InvalidParameter(format!("F = {} not in (0, 2]", self.mutation)));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return Err(Error::InvalidParameter(format!("CR = {} not in [0, 1]", self.crossover)));
        }
        Ok(())
    }

    pub fn generations_for(&self, budget: u64) -> u64 {
        self.max_generations.unwrap_or((budget / self.population as u64).max(1))
    }
}

/// How the initial population is seeded.
pub enum PopulationInit<'a, R: ?Sized> {
    Uniform,
    /// Member 0 is `seed`; the others come from `guide` when given, else uniform.
    Seeded {
        seed: Vec<f64>,
        guide: Option<&'a mut dyn FnMut(&mut R) -> Vec<f64>>,
    },
}

pub fn init_population<R: Rng + ?Sized>(
    bounds: &Bounds,
    size: usize,
    init: PopulationInit<'_, R>,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    if size < 4 {
        return Err(Error::InvalidParameter(format!("population {size} < 4")));
    }
    match init {
        PopulationInit::Uniform => Ok((0..size).map(|_| bounds.sample(rng)).collect()),
        PopulationInit::Seeded { seed, mut guide } => {
            if seed.len() != bounds.dim() {
                return Err(Error::LengthMismatch { expected: bounds.dim(), got: seed.len() });
            }
            let mut pop = Vec::with_capacity(size);
            pop.push(seed);
            for _ in 1..size {
                let member = match guide.as_mut() {
                    Some(g) => g(rng),
                    None => bounds.sample(rng),
                };
                if member.len() != bounds.dim() {
                    return Err(Error::LengthMismatch { expected: bounds.dim(), got: member.len() });
                }
                pop.push(member);
            }
            Ok(pop)
        }
    }
}

/// `v_a + F (v_b - v_c)`, clamped into `bounds`.
pub fn mutate_with(
    population: &[Vec<f64>],
    (a, b, c): (usize, usize, usize),
    factor: f64,
    bounds: &Bounds,
) -> Vec<f64> {
    let (va, vb, vc) = (&population[a], &population[b], &population[c]);
    (0..va.len())
        .map(|k| bounds.clamp(k, va[k] + factor * (vb[k] - vc[k])))
        .collect()
}

/// Rand/1 mutant for member `target`, with three donors distinct from it and each other.
pub fn mutate<R: Rng + ?Sized>(
    population: &[Vec<f64>],
    target: usize,
    factor: f64,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let n = population.len();
    if n < 4 {
        return Err(Error::InvalidParameter(format!("population {n} < 4")));
    }
    let picks: Vec<usize> = sample(rng, n - 1, 3)
        .into_iter()
        .map(|k| if k >= target { k + 1 } else { k })
        .collect();
    Ok(mutate_with(population, (picks[0], picks[1], picks[2]), factor, bounds))
}

/// Binomial crossover with one coordinate forced from the mutant.
pub fn crossover<R: Rng + ?Sized>(
    target: &[f64],
    mutant: &[f64],
    rate: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if target.len() != mutant.len() {
        return Err(Error::LengthMismatch { expected: target.len(), got: mutant.len() });
    }
    let forced = rng.random_range(0..target.len());
    Ok(target
        .iter()
        .zip(mutant)
        .enumerate()
        .map(|(k, (t, m))| if k == forced || rng.random::<f64>() < rate { *m } else { *t })
        .collect())
}

/// Runs DE until the first success, the budget or the generation cap.
pub fn evolve<O: Objective, R: Rng + ?Sized>(
    objective: O,
    bounds: &Bounds,
    params: &DeParams,
    init: PopulationInit<'_, R>,
    rng: &mut R,
) -> std::result::Result<SearchOutcome, EvalError> {
    params.validate()?;
    let mut tracker = Tracker::new(objective);
    let generations = params.generations_for(tracker.budget());
    let mut population = init_population(bounds, params.population, init, rng)?;

    let mut fitness = Vec::with_capacity(population.len());
    for member in &population {
        match tracker.eval(member)? {
            Step::Value(v) => fitness.push(v),
            Step::Stop(out) => return Ok(out),
        }
    }

    for _ in 0..generations {
        let trials = (0..population.len())
            .map(|i| {
                let mutant = mutate(&population, i, params.mutation, bounds, rng)?;
                crossover(&population[i], &mutant, params.crossover, rng)
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, trial) in trials.into_iter().enumerate() {
            match tracker.eval(&trial)? {
                Step::Value(v) => {
                    if v <= fitness[i] {
                        population[i] = trial;
                        fitness[i] = v;
                    }
                }
                Step::Stop(out) => return Ok(out),
            }
        }
    }
    Ok(tracker.finish(false, StopReason::GenerationLimit))
}
