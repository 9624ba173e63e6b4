//! Real-coded genetic algorithm.
//!
//! Bookkeeping is sequential and seeded; evaluation is handed a whole batch so
//! callers can fan it out however they like. Fitness values are matched to
//! chromosomes by position, never by completion order.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Selection {
    Tournament { size: usize },
    FitnessProportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub selection: Selection,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Per-gene standard deviation; empty means 10% of each gene's range.
    pub mutation_sigma: Vec<f64>,
    pub elitism: usize,
    /// Stop after this many generations without improvement of the best.
    pub stagnation_window: usize,
    pub seed: u64,
    pub bounds: Vec<(f64, f64)>,
    pub objective: Objective,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 50,
            max_generations: 200,
            selection: Selection::Tournament { size: 3 },
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            mutation_sigma: Vec::new(),
            elitism: 1,
            stagnation_window: 30,
            seed: 0,
            bounds: Vec::new(),
            objective: Objective::Minimize,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.population_size < 2 {
            return bad("population_size must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.bounds.is_empty() {
            return bad("at least one gene bound is required");
        }
        if self.bounds.iter().any(|&(lo, hi)| !(lo <= hi && lo.is_finite() && hi.is_finite())) {
            return bad("every bound needs finite lo <= hi");
        }
        if !self.mutation_sigma.is_empty() && self.mutation_sigma.len() != self.bounds.len() {
            return bad("mutation_sigma must match the gene count");
        }
        if self.mutation_sigma.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("mutation_sigma must be non-negative");
        }
        if let Selection::Tournament { size } = self.selection {
            if size == 0 {
                return bad("tournament size must be positive");
            }
        }
        if self.elitism >= self.population_size {
            return bad("elitism must be smaller than the population");
        }
        Ok(())
    }

    /// Search box of `[0.25×, 4×]` around each reference value.
    pub fn bounds_around(reference: &[f64]) -> Vec<(f64, f64)> {
        reference
            .iter()
            .map(|&v| {
                let (a, b) = (0.25 * v, 4.0 * v);
                if a <= b { (a, b) } else { (b, a) }
            })
            .collect()
    }

    fn sigmas(&self) -> Vec<f64> {
        if self.mutation_sigma.is_empty() {
            self.bounds.iter().map(|(lo, hi)| 0.1 * (hi - lo)).collect()
        } else {
            self.mutation_sigma.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chromosome {
    pub genes: Vec<f64>,
    pub fitness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness in this generation.
    pub best: f64,
    /// Mean over candidates with finite fitness.
    pub mean: f64,
    pub best_ever: f64,
    /// Candidates whose evaluation was non-finite.
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub best: Chromosome,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
}

fn better(obj: Objective, a: f64, b: f64) -> bool {
    match obj {
        Objective::Minimize => a < b,
        Objective::Maximize => a > b,
    }
}

fn worst(obj: Objective) -> f64 {
    match obj {
        Objective::Minimize => f64::INFINITY,
        Objective::Maximize => f64::NEG_INFINITY,
    }
}

/// Indices ordered best first; ties keep population order.
fn ranking(obj: Objective, fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = fitness[a].total_cmp(&fitness[b]);
        match obj {
            Objective::Minimize => o,
            Objective::Maximize => o.reverse(),
        }
    });
    idx
}

fn select(cfg: &GaConfig, fitness: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let n = fitness.len();
    match cfg.selection {
        Selection::Tournament { size } => {
            let mut best = rng.random_range(0..n);
            for _ in 1..size {
                let c = rng.random_range(0..n);
                if better(cfg.objective, fitness[c], fitness[best]) {
                    best = c;
                }
            }
            best
        }
        Selection::FitnessProportional => {
            let score: Vec<f64> = fitness
                .iter()
                .map(|&f| match cfg.objective {
                    Objective::Minimize => -f,
                    Objective::Maximize => f,
                })
                .map(|s| if s.is_finite() { s } else { f64::NAN })
                .collect();
            let floor = score.iter().copied().filter(|s| s.is_finite()).fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = score.iter().map(|&s| if s.is_finite() { s - floor + 1e-12 } else { 0.0 }).collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return rng.random_range(0..n);
            }
            let mut r = rng.random::<f64>() * total;
            for (i, w) in weights.iter().enumerate() {
                if r < *w {
                    return i;
                }
                r -= w;
            }
            n - 1
        }
    }
}

fn sanitize(obj: Objective, values: Vec<f64>, expected: usize) -> Result<Vec<f64>> {
    if values.len() != expected {
        return Err(Error::InvalidArgument(alloc::format!("evaluator returned {} values for {expected} chromosomes", values.len())));
    }
    Ok(values.into_iter().map(|v| if v.is_finite() { v } else { worst(obj) }).collect())
}

fn stats(obj: Objective, generation: usize, fitness: &[f64], best_ever: f64) -> GenerationStats {
    let finite: Vec<f64> = fitness.iter().copied().filter(|f| f.is_finite()).collect();
    let best = fitness[ranking(obj, fitness)[0]];
    GenerationStats {
        generation,
        best,
        mean: if finite.is_empty() { f64::NAN } else { finite.iter().sum::<f64>() / finite.len() as f64 },
        best_ever,
        invalid: fitness.len() - finite.len(),
    }
}

/// Runs the genetic search. `evaluate` scores a batch of gene vectors;
/// non-finite scores count as the worst possible fitness. `initial` seeds the
/// first population (padded with uniform samples, truncated if too long).
pub fn ga_optimize<F>(config: &GaConfig, initial: &[Vec<f64>], mut evaluate: F) -> Result<GaResult>
where
    F: FnMut(&[Vec<f64>]) -> Vec<f64>,
{
    config.validate()?;
    let obj = config.objective;
    let n_genes = config.bounds.len();
    let sigmas = config.sigmas();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sample_gene = |rng: &mut ChaCha8Rng, i: usize| {
        let (lo, hi) = config.bounds[i];
        if lo == hi { lo } else { rng.random_range(lo..=hi) }
    };

    let mut pop: Vec<Vec<f64>> = Vec::with_capacity(config.population_size);
    for g in initial.iter().take(config.population_size) {
        if g.len() != n_genes {
            return Err(Error::InvalidArgument("initial chromosome has the wrong gene count".into()));
        }
        pop.push(g.iter().zip(&config.bounds).map(|(&v, &(lo, hi))| v.clamp(lo, hi)).collect());
    }
    while pop.len() < config.population_size {
        pop.push((0..n_genes).map(|i| sample_gene(&mut rng, i)).collect());
    }
    let mut fitness = sanitize(obj, evaluate(&pop), pop.len())?;
    let mut evaluations = pop.len();
    let first = ranking(obj, &fitness)[0];
    let mut best = Chromosome { genes: pop[first].clone(), fitness: Some(fitness[first]) };
    let mut history = alloc::vec![stats(obj, 0, &fitness, fitness[first])];
    let mut stagnant = 0;
    let normals: Vec<Option<Normal<f64>>> = sigmas.iter().map(|&s| (s > 0.0).then(|| Normal::new(0.0, s).expect("valid sigma"))).collect();

    for generation in 1..=config.max_generations {
        let order = ranking(obj, &fitness);
        let mut next: Vec<Vec<f64>> = order[..config.elitism].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<f64> = order[..config.elitism].iter().map(|&i| fitness[i]).collect();
        while next.len() < config.population_size {
            let a = &pop[select(config, &fitness, &mut rng)];
            let b = &pop[select(config, &fitness, &mut rng)];
            let (mut c1, mut c2) = (a.clone(), b.clone());
            if n_genes > 1 && rng.random::<f64>() < config.crossover_rate {
                let cut = rng.random_range(1..n_genes);
                c1[cut..].copy_from_slice(&b[cut..]);
                c2[cut..].copy_from_slice(&a[cut..]);
            }
            for child in [&mut c1, &mut c2] {
                for (i, g) in child.iter_mut().enumerate() {
                    if config.mutation_rate > 0.0 && rng.random::<f64>() < config.mutation_rate {
                        if let Some(nd) = &normals[i] {
                            let (lo, hi) = config.bounds[i];
                            *g = (*g + nd.sample(&mut rng)).clamp(lo, hi);
                        }
                    }
                }
            }
            next.push(c1);
            if next.len() < config.population_size {
                next.push(c2);
            }
        }
        let fresh = sanitize(obj, evaluate(&next[config.elitism..]), next.len() - config.elitism)?;
        evaluations += fresh.len();
        next_fit.extend(fresh);
        pop = next;
        fitness = next_fit;

        let top = ranking(obj, &fitness)[0];
        if better(obj, fitness[top], best.fitness.unwrap_or(worst(obj))) {
            best = Chromosome { genes: pop[top].clone(), fitness: Some(fitness[top]) };
            stagnant = 0;
        } else {
            stagnant += 1;
        }
        history.push(stats(obj, generation, &fitness, best.fitness.unwrap_or(worst(obj))));
        if config.stagnation_window > 0 && stagnant >= config.stagnation_window {
            break;
        }
    }
    Ok(GaResult { best, history, evaluations })
}
