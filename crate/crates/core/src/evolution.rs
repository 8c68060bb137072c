//! Genetic operators that build the candidate pool scored by the surrogate.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::space::{sample_uniform, Candidate, Dimension, Gene, Scale, SearchSpace};

/// Elite population size drawn from the evaluated history.
pub const ELITE_SIZE: usize = 20;
/// Regeneration attempts for a child that duplicates a history point.
pub const DEDUP_RETRIES: usize = 10;
/// Normalized distance under which two candidates are the same point.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("parents have {0} and {1} genes")]
    SpaceMismatch(usize, usize),
    #[error("empty population")]
    EmptyPopulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaParams {
    pub pc: f64,
    pub pm: f64,
    pub pool_size: usize,
    pub tournament_k: usize,
    pub mutation_sigma: f64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            pc: 0.9,
            pm: 0.2,
            pool_size: 50,
            tournament_k: 3,
            mutation_sigma: 0.1,
        }
    }
}

/// Index of the fittest member among `k` distinct random picks; ties go to
/// the lower index.
fn tournament<R: Rng + ?Sized>(fitness: &[f64], k: usize, rng: &mut R) -> usize {
    let k = k.clamp(1, fitness.len());
    let mut picks = rand::seq::index::sample(rng, fitness.len(), k).into_vec();
    picks.sort_unstable();
    let mut best = picks[0];
    for &i in &picks[1..] {
        if fitness[i] > fitness[best] {
            best = i;
        }
    }
    best
}

/// Two independent size-`k` tournaments.
pub fn select_parents<'a, R: Rng + ?Sized>(
    population: &'a [(Candidate, f64)],
    k: usize,
    rng: &mut R,
) -> Result<(&'a Candidate, &'a Candidate), EvolutionError> {
    if population.is_empty() {
        return Err(EvolutionError::EmptyPopulation);
    }
    let fitness: Vec<f64> = population.iter().map(|(_, f)| *f).collect();
    let a = tournament(&fitness, k, rng);
    let b = tournament(&fitness, k, rng);
    Ok((&population[a].0, &population[b].0))
}

/// Uniform crossover with probability `pc`; otherwise a copy of `a`.
pub fn crossover<R: Rng + ?Sized>(
    a: &Candidate,
    b: &Candidate,
    pc: f64,
    rng: &mut R,
) -> Result<Candidate, EvolutionError> {
    if a.len() != b.len() {
        return Err(EvolutionError::SpaceMismatch(a.len(), b.len()));
    }
    if !rng.random_bool(pc.clamp(0.0, 1.0)) {
        return Ok(a.clone());
    }
    let genes = a
        .genes
        .iter()
        .zip(&b.genes)
        .map(|(ga, gb)| if rng.random_bool(0.5) { *ga } else { *gb })
        .collect();
    Ok(Candidate::new(genes))
}

/// Per-gene mutation with probability `pm`. Numeric genes get a Gaussian
/// step of `sigma` times the dimension's range (in log space for log
/// dimensions) and are clamped; categorical genes are redrawn among the
/// other choices.
pub fn mutate<R: Rng + ?Sized>(
    space: &SearchSpace,
    c: &Candidate,
    pm: f64,
    sigma: f64,
    rng: &mut R,
) -> Candidate {
    let pm = pm.clamp(0.0, 1.0);
    let genes = space
        .dims
        .iter()
        .zip(&c.genes)
        .map(|(d, g)| {
            if !rng.random_bool(pm) {
                return *g;
            }
            match (d, g) {
                (Dimension::Continuous { lo, hi, scale, .. }, Gene::Real(v)) => {
                    let v = match scale {
                        Scale::Linear => v + gaussian(rng, sigma * (hi - lo)),
                        Scale::Log => (v.ln() + gaussian(rng, sigma * (hi.ln() - lo.ln()))).exp(),
                    };
                    Gene::Real(v.clamp(*lo, *hi))
                }
                (Dimension::Integer { lo, hi, .. }, Gene::Int(v)) => {
                    let step = gaussian(rng, sigma * (hi - lo) as f64);
                    let moved = (*v as f64 + step).round();
                    Gene::Int((moved as i64).clamp(*lo, *hi))
                }
                (Dimension::Categorical { choices, .. }, Gene::Cat(i)) => {
                    if choices.len() < 2 {
                        return *g;
                    }
                    let r = rng.random_range(0..choices.len() - 1);
                    Gene::Cat(if r >= *i { r + 1 } else { r })
                }
                _ => *g,
            }
        })
        .collect();
    Candidate::new(genes)
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, std: f64) -> f64 {
    if std <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).expect("finite std").sample(rng)
}

/// Indices of the `n` fittest entries, best first, earlier index on ties.
pub fn elite_indices(history: &[(Candidate, f64)], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..history.len()).collect();
    idx.sort_by(|&a, &b| history[b].1.total_cmp(&history[a].1).then(a.cmp(&b)));
    idx.truncate(n);
    idx
}

fn near_any(z: &[f64], known: &[Vec<f64>]) -> bool {
    known.iter().any(|k| {
        let d2: f64 = k.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum();
        d2.sqrt() <= DEDUP_TOLERANCE
    })
}

/// Builds a pool of `ga.pool_size` children from the elite of `history` by
/// repeated selection, crossover and mutation. A child that coincides with
/// an evaluated point is regenerated up to [`DEDUP_RETRIES`] times and then
/// kept.
pub fn evolve_candidates<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &[(Candidate, f64)],
    ga: &GaParams,
    rng: &mut R,
) -> Result<Vec<Candidate>, EvolutionError> {
    if history.is_empty() {
        return Err(EvolutionError::EmptyPopulation);
    }
    let population: Vec<(Candidate, f64)> = elite_indices(history, ELITE_SIZE)
        .into_iter()
        .map(|i| history[i].clone())
        .collect();
    let known: Vec<Vec<f64>> = history.iter().map(|(c, _)| space.normalize(c)).collect();

    let mut pool = Vec::with_capacity(ga.pool_size);
    while pool.len() < ga.pool_size {
        let mut attempt = 0;
        let child = loop {
            let (a, b) = select_parents(&population, ga.tournament_k, rng)?;
            let child = crossover(a, b, ga.pc, rng)?;
            let child = mutate(space, &child, ga.pm, ga.mutation_sigma, rng);
            if attempt >= DEDUP_RETRIES || !near_any(&space.normalize(&child), &known) {
                break child;
            }
            attempt += 1;
        };
        pool.push(child);
    }
    Ok(pool)
}
