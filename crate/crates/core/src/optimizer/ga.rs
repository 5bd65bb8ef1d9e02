//! Real-coded genetic algorithm over the probability simplex.
//!
//! Chromosomes are positive reals mapped onto the simplex by `x / Σx`, so
//! crossover and mutation never leave the feasible set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest gene value kept after mutation; keeps every ratio strictly positive.
const MIN_GENE: f64 = 1e-6;

/// Final mutation scale as a fraction of the initial one.
const SIGMA_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    /// Probability that a child is an arithmetic blend of its parents.
    pub crossover_rate: f64,
    /// Per-gene probability of a Gaussian perturbation.
    pub mutation_rate: f64,
    /// Standard deviation of the perturbation at generation zero; it decays
    /// linearly to a tenth of this over the run.
    pub mutation_sigma: f64,
    pub elitism_count: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 60,
            generations: 200,
            crossover_rate: 0.8,
            mutation_rate: 0.1,
            mutation_sigma: 0.05,
            elitism_count: 2,
            seed: 0x5eed,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::InvalidConfig(format!("population size must be at least 4, got {}", self.population_size)));
        }
        for (name, rate) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidConfig(format!("{name} rate must lie in [0, 1], got {rate}")));
            }
        }
        if !(self.mutation_sigma.is_finite() && self.mutation_sigma >= 0.0) {
            return Err(Error::InvalidConfig(format!("mutation sigma must be non-negative, got {}", self.mutation_sigma)));
        }
        if self.elitism_count >= self.population_size {
            return Err(Error::InvalidConfig("elitism count must be below the population size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    pub alphas: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best objective value after each generation (index 0 is the initial population).
    pub history: Vec<f64>,
}

/// Minimizes `objective` over the `n_vars`-simplex.
pub fn ga_minimize<F>(objective: F, n_vars: usize, params: &GaParams) -> Result<GaOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    ga_minimize_from(objective, n_vars, params, &[])
}

/// Like [`ga_minimize`], with `initial` individuals injected into the first
/// population (warm start). They are projected onto the simplex first.
pub fn ga_minimize_from<F>(objective: F, n_vars: usize, params: &GaParams, initial: &[Vec<f64>]) -> Result<GaOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    params.validate()?;
    if n_vars == 0 {
        return Err(Error::InvalidConfig("at least one variable is required".into()));
    }
    if n_vars == 1 {
        let alphas = vec![1.0];
        let value = sanitize(objective(&alphas));
        return Ok(GaOutcome { alphas, value, evaluations: 1, history: vec![value] });
    }
    if let Some(bad) = initial.iter().find(|x| x.len() != n_vars) {
        return Err(Error::InvalidConfig(format!("initial individual has {} genes, expected {n_vars}", bad.len())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut population: Vec<Vec<f64>> = initial.iter().take(params.population_size).map(|x| project(x.clone())).collect();
    while population.len() < params.population_size {
        let x: Vec<f64> = (0..n_vars).map(|_| Exp1.sample(&mut rng)).collect();
        population.push(project(x));
    }
    let mut fitness = evaluate(&objective, &population);
    let mut evaluations = population.len();
    let mut history = vec![best_of(&fitness).1];

    for generation in 0..params.generations {
        let ranked = rank(&fitness);
        let progress = generation as f64 / params.generations.max(1) as f64;
        let sigma = params.mutation_sigma * (1.0 - (1.0 - SIGMA_FLOOR) * progress);
        let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");

        let mut next: Vec<Vec<f64>> = ranked.iter().take(params.elitism_count).map(|&i| population[i].clone()).collect();
        let mut next_fitness: Vec<f64> = ranked.iter().take(params.elitism_count).map(|&i| fitness[i]).collect();
        let mut children = Vec::with_capacity(params.population_size - next.len());
        while next.len() + children.len() < params.population_size {
            let a = tournament(&fitness, &mut rng);
            let b = tournament(&fitness, &mut rng);
            let mut child = if rng.gen::<f64>() < params.crossover_rate {
                let w: f64 = rng.gen();
                population[a].iter().zip(&population[b]).map(|(x, y)| w * x + (1.0 - w) * y).collect()
            } else {
                population[a].clone()
            };
            for gene in child.iter_mut() {
                if rng.gen::<f64>() < params.mutation_rate {
                    *gene += noise.sample(&mut rng);
                }
            }
            children.push(project(child));
        }
        let child_fitness = evaluate(&objective, &children);
        evaluations += children.len();
        next.extend(children);
        next_fitness.extend(child_fitness);
        population = next;
        fitness = next_fitness;
        history.push(best_of(&fitness).1);
    }

    let (best, value) = best_of(&fitness);
    Ok(GaOutcome { alphas: population[best].clone(), value, evaluations, history })
}

/// Clamps genes to stay positive and rescales them to sum to one.
fn project(mut x: Vec<f64>) -> Vec<f64> {
    for g in x.iter_mut() {
        if !(g.is_finite() && *g >= MIN_GENE) {
            *g = MIN_GENE;
        }
    }
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|g| *g /= total);
    x
}

fn sanitize(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        f64::INFINITY
    }
}

/// Order-preserving parallel evaluation; results do not depend on the thread count.
fn evaluate<F>(objective: &F, population: &[Vec<f64>]) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    population.par_iter().map(|x| sanitize(objective(x))).collect()
}

fn rank(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    idx
}

fn best_of(fitness: &[f64]) -> (usize, f64) {
    let i = rank(fitness)[0];
    (i, fitness[i])
}

fn tournament(fitness: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let a = rng.gen_range(0..fitness.len());
    let b = rng.gen_range(0..fitness.len());
    if fitness[b] < fitness[a] {
        b
    } else {
        a
    }
}
