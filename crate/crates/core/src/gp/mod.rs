//! Generational search over activation trees.
//!
//! Each generation is scored, its best `elite_size` members are copied
//! forward, and the rest of the next population comes from softmax
//! selection followed by optional crossover and mutation. The best
//! individual seen in any scored generation is returned.

pub mod fitness;
pub mod variation;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::RngStream;
use crate::tree::{ActivationTree, TerminalSet};

pub use fitness::{
    fitness, needs_training, Evaluator, FitnessBreakdown, FitnessStatus, FitnessWeights, NetworkEvaluator,
};
pub use variation::{crossover, mutate, ramped_population, softmax_probabilities, softmax_select, SelectionScale};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population_size: usize,
    /// Number of scored generations, the initial one included.
    pub generations: usize,
    pub max_depth: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub elite_size: usize,
    pub selection_temperature: f64,
    pub selection_scale: SelectionScale,
    pub lambda_d: f64,
    pub lambda_s: f64,
    pub lambda_h: f64,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 100,
            generations: 30,
            max_depth: 3,
            p_crossover: 0.7,
            p_mutation: 0.15,
            elite_size: 2,
            selection_temperature: 1.0,
            selection_scale: SelectionScale::Raw,
            lambda_d: FitnessWeights::default().lambda_d,
            lambda_s: FitnessWeights::default().lambda_s,
            lambda_h: FitnessWeights::default().lambda_h,
            seed: 0,
        }
    }
}

impl GpConfig {
    pub fn weights(&self) -> FitnessWeights {
        FitnessWeights {
            lambda_d: self.lambda_d,
            lambda_s: self.lambda_s,
            lambda_h: self.lambda_h,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || self.generations == 0 || self.max_depth == 0 {
            return Err(Error::Config("population, generations and depth must be positive".into()));
        }
        if self.elite_size >= self.population_size {
            return Err(Error::Config("elite size must be below the population size".into()));
        }
        for (name, p) in [("crossover", self.p_crossover), ("mutation", self.p_mutation)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
            }
        }
        if !(self.selection_temperature > 0.0) || !self.selection_temperature.is_finite() {
            return Err(Error::Config("selection temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initial,
    Elite,
    Crossover,
    Mutation,
    CrossoverMutation,
    Reproduction,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Initial => "initial",
            Origin::Elite => "elite",
            Origin::Crossover => "crossover",
            Origin::Mutation => "mutation",
            Origin::CrossoverMutation => "crossover+mutation",
            Origin::Reproduction => "reproduction",
        })
    }
}

/// Where an individual came from: its generation and the indices of its
/// parents in the previous generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lineage {
    pub generation: usize,
    pub parents: Vec<usize>,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub tree: ActivationTree,
    pub fitness: Option<FitnessBreakdown>,
    pub lineage: Lineage,
}

impl Individual {
    pub fn total(&self) -> f64 {
        self.fitness.as_ref().map_or(f64::NEG_INFINITY, |f| f.total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRecord {
    pub generation: usize,
    pub index: usize,
    pub formula: String,
    pub fitness: FitnessBreakdown,
    pub lineage: Lineage,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub best: Individual,
    pub best_generation: usize,
    pub history: Vec<HistoryRecord>,
    /// Best total per scored generation.
    pub generation_best: Vec<f64>,
    /// Networks actually trained.
    pub trainings: usize,
}

#[cfg(feature = "parallel")]
fn map_ordered<T: Send, R: Send>(items: Vec<T>, f: impl Fn(T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_ordered<T, R>(items: Vec<T>, f: impl Fn(T) -> R) -> Vec<R> {
    items.into_iter().map(f).collect()
}

/// Scores every unscored individual. Identical formulas are scored once
/// per run; the first occurrence (by generation, then index) fixes the
/// training seed.
fn score_generation(
    population: &mut [Individual],
    generation: usize,
    evaluator: &dyn Evaluator,
    config: &GpConfig,
    base: &RngStream,
    cache: &mut HashMap<String, FitnessBreakdown>,
) -> usize {
    let mut pending: Vec<(usize, ActivationTree)> = Vec::new();
    for (i, ind) in population.iter().enumerate() {
        let key = ind.tree.to_string();
        if !cache.contains_key(&key) && !pending.iter().any(|(_, t)| t.to_string() == key) {
            pending.push((i, ind.tree.clone()));
        }
    }
    let trainings = pending.iter().filter(|(_, t)| needs_training(t)).count();
    let results = map_ordered(pending, |(i, tree)| {
        let mut rng = base.derive_indexed("fitness", generation as u64).derive_indexed("individual", i as u64);
        let f = fitness(&tree, evaluator, &config.weights(), &mut rng);
        (tree.to_string(), f)
    });
    cache.extend(results);
    for ind in population.iter_mut() {
        ind.fitness = cache.get(&ind.tree.to_string()).cloned();
    }
    trainings
}

pub fn evolve(evaluator: &dyn Evaluator, config: &GpConfig, terminals: &TerminalSet) -> Result<EvolutionResult> {
    config.validate()?;
    let base = RngStream::new(config.seed);
    let mut init_rng = base.derive("init");
    let mut population: Vec<Individual> = ramped_population(config.population_size, config.max_depth, terminals, &mut init_rng)
        .into_iter()
        .map(|tree| Individual {
            tree,
            fitness: None,
            lineage: Lineage {
                generation: 0,
                parents: Vec::new(),
                origin: Origin::Initial,
            },
        })
        .collect();

    let mut cache = HashMap::new();
    let mut history = Vec::new();
    let mut generation_best = Vec::with_capacity(config.generations);
    let mut best: Option<(Individual, usize)> = None;
    let mut trainings = 0;
    for g in 0..config.generations {
        trainings += score_generation(&mut population, g, evaluator, config, &base, &mut cache);
        let mut gen_best = f64::NEG_INFINITY;
        for (i, ind) in population.iter().enumerate() {
            let f = ind.fitness.clone().expect("scored above");
            gen_best = gen_best.max(f.total);
            if best.as_ref().is_none_or(|(b, _)| f.total > b.total()) {
                best = Some((ind.clone(), g));
            }
            history.push(HistoryRecord {
                generation: g,
                index: i,
                formula: ind.tree.to_string(),
                fitness: f,
                lineage: ind.lineage.clone(),
            });
        }
        generation_best.push(gen_best);
        log::info!("generation {g}: best {gen_best:.4}");
        if g + 1 == config.generations {
            break;
        }
        population = next_generation(&population, g + 1, config, terminals, &mut base.derive_indexed("variation", g as u64))?;
    }
    let (best, best_generation) = best.expect("at least one generation");
    Ok(EvolutionResult {
        best,
        best_generation,
        history,
        generation_best,
        trainings,
    })
}

fn next_generation(
    population: &[Individual],
    generation: usize,
    config: &GpConfig,
    terminals: &TerminalSet,
    rng: &mut RngStream,
) -> Result<Vec<Individual>> {
    let totals: Vec<f64> = population.iter().map(Individual::total).collect();
    let mut ranked: Vec<usize> = (0..population.len()).collect();
    ranked.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]).then(a.cmp(&b)));
    let mut next: Vec<Individual> = ranked[..config.elite_size]
        .iter()
        .map(|&i| Individual {
            tree: population[i].tree.clone(),
            fitness: population[i].fitness.clone(),
            lineage: Lineage {
                generation,
                parents: vec![i],
                origin: Origin::Elite,
            },
        })
        .collect();
    while next.len() < config.population_size {
        let parents = softmax_select(&totals, 2, config.selection_temperature, config.selection_scale, rng)?;
        let (pa, pb) = (&population[parents[0]].tree, &population[parents[1]].tree);
        let crossed = rng.bernoulli(config.p_crossover);
        let (mut ca, mut cb) = if crossed {
            crossover(pa, pb, config.max_depth, rng)
        } else {
            (pa.clone(), pb.clone())
        };
        let mut mutated = [false; 2];
        for (child, flag) in [&mut ca, &mut cb].into_iter().zip(mutated.iter_mut()) {
            if rng.bernoulli(config.p_mutation) {
                *child = mutate(child, config.max_depth, terminals, rng);
                *flag = true;
            }
        }
        for (k, (child, was_mutated)) in [(ca, mutated[0]), (cb, mutated[1])].into_iter().enumerate() {
            if next.len() == config.population_size {
                break;
            }
            let origin = match (crossed, was_mutated) {
                (true, true) => Origin::CrossoverMutation,
                (true, false) => Origin::Crossover,
                (false, true) => Origin::Mutation,
                (false, false) => Origin::Reproduction,
            };
            let parents = if crossed { parents.clone() } else { vec![parents[k]] };
            next.push(Individual {
                tree: child,
                fitness: None,
                lineage: Lineage {
                    generation,
                    parents,
                    origin,
                },
            });
        }
    }
    Ok(next)
}

/// One row per scored individual.
pub fn history_csv(history: &[HistoryRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Config(format!("history csv: {e}"));
    w.write_record(["generation", "index", "formula", "a_val", "N", "H", "D", "F", "status", "origin", "parents"])
        .map_err(csv_err)?;
    for r in history {
        let parents: Vec<String> = r.lineage.parents.iter().map(usize::to_string).collect();
        w.write_record([
            r.generation.to_string(),
            r.index.to_string(),
            r.formula.clone(),
            format!("{}", r.fitness.a_val),
            r.fitness.n.to_string(),
            r.fitness.h.to_string(),
            r.fitness.d.to_string(),
            format!("{}", r.fitness.total),
            format!("{:?}", r.fitness.status).to_lowercase(),
            r.lineage.origin.to_string(),
            parents.join(" "),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("history csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
