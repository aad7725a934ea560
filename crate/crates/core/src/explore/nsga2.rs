//! NSGA-II over mantissa-level genomes.
//!
//! Genomes are vectors of alphabet indices. Every distinct genome is
//! evaluated at most once: children that repeat an earlier genome are
//! re-mutated, and if that keeps failing they are replaced by a random genome
//! not seen yet. Together with the hard evaluation cap this means a budget of
//! at least the space size, spread over enough generations, visits every
//! configuration. The returned frontier is drawn from the whole evaluation
//! log, not only the last population.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pareto::{crowding_distance, hypervolume, nondominated_sort};
use super::{EvalPoint, Evaluate, Frontier, Objective, SearchResult, SearchSpace};
use crate::bench::seeded_rng;
use crate::error::{Error, Result};

/// Error/energy corner used to measure progress for early stopping.
pub const HYPERVOLUME_REFERENCE: (f64, f64) = (100.0, 101.0);

const REMUTATE_ATTEMPTS: usize = 8;
const RANDOM_ATTEMPTS: usize = 256;
/// Spaces up to this size fall back to a scan for unseen genomes.
const SCAN_LIMIT: u128 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-gene reset probability; `None` means one over the genome length.
    pub mutation_rate: Option<f64>,
    pub eval_budget: usize,
    pub seed: u64,
    /// Stop after this many generations without hypervolume gain.
    pub stall_generations: Option<usize>,
    pub objective: Objective,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 40,
            generations: 10,
            crossover_rate: 0.9,
            mutation_rate: None,
            eval_budget: 400,
            seed: 0,
            stall_generations: None,
            objective: Objective::Fpu,
        }
    }
}

impl GaParams {
    /// The initial population counts as the first generation, so a full run
    /// needs `population_size * generations` evaluations.
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config("population size must be at least 2".into()));
        }
        if self.generations == 0 {
            return Err(Error::Config("at least one generation is required".into()));
        }
        let needed = self.population_size.saturating_mul(self.generations);
        if needed > self.eval_budget {
            return Err(Error::Config(format!(
                "population {} x generations {} = {needed} evaluations exceeds the budget of {}",
                self.population_size, self.generations, self.eval_budget
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::Config("crossover rate must lie in [0, 1]".into()));
        }
        if let Some(m) = self.mutation_rate {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::Config("mutation rate must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

struct Archive<'a, E: Evaluate> {
    space: &'a SearchSpace,
    evaluator: &'a E,
    budget: usize,
    objective: Objective,
    log: Vec<EvalPoint>,
    genomes: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
}

impl<E: Evaluate> Archive<'_, E> {
    fn remaining(&self) -> usize {
        self.budget - self.log.len()
    }

    fn exhausted(&self) -> bool {
        self.log.len() as u128 >= self.space.size()
    }

    /// Evaluate unseen genomes (in order, up to the budget) and return their
    /// log positions.
    fn evaluate(&mut self, batch: Vec<Vec<usize>>) -> Result<Vec<usize>> {
        let batch: Vec<Vec<usize>> = batch.into_iter().take(self.remaining()).collect();
        let configs = batch.iter().map(|g| self.space.config(g)).collect::<Result<Vec<_>>>()?;
        let points = self.evaluator.evaluate_batch(&configs)?;
        let mut ids = Vec::with_capacity(points.len());
        for (genome, point) in batch.into_iter().zip(points) {
            let id = self.log.len();
            self.index.insert(genome.clone(), id);
            self.genomes.push(genome);
            self.log.push(point);
            ids.push(id);
        }
        Ok(ids)
    }

    fn objectives(&self, ids: &[usize]) -> Vec<(f64, f64)> {
        ids.iter().map(|&i| self.log[i].objectives(self.objective)).collect()
    }

    fn hypervolume(&self) -> f64 {
        let all: Vec<(f64, f64)> = self.log.iter().map(|p| p.objectives(self.objective)).collect();
        hypervolume(&all, HYPERVOLUME_REFERENCE)
    }
}

fn random_genome(rng: &mut ChaCha8Rng, space: &SearchSpace) -> Vec<usize> {
    (0..space.genes()).map(|_| rng.gen_range(0..space.alphabet.len())).collect()
}

/// A genome neither evaluated nor already pending, if one can be found.
fn unseen_genome(
    rng: &mut ChaCha8Rng,
    space: &SearchSpace,
    seen: &HashMap<Vec<usize>, usize>,
    pending: &HashSet<Vec<usize>>,
) -> Option<Vec<usize>> {
    let fresh = |g: &Vec<usize>| !seen.contains_key(g) && !pending.contains(g);
    let size = space.size();
    if seen.len() as u128 + pending.len() as u128 >= size {
        return None;
    }
    for _ in 0..RANDOM_ATTEMPTS {
        let g = random_genome(rng, space);
        if fresh(&g) {
            return Some(g);
        }
    }
    if size <= SCAN_LIMIT {
        let start = rng.gen_range(0..size);
        return (0..size).map(|k| space.decode((start + k) % size)).find(|g| fresh(g));
    }
    None
}

/// Rank and crowding of each member of `ids`, aligned with `ids`.
fn rank_and_crowd(objs: &[(f64, f64)]) -> (Vec<usize>, Vec<f64>) {
    let mut rank = vec![0; objs.len()];
    let mut crowd = vec![0.0; objs.len()];
    for (r, front) in nondominated_sort(objs).iter().enumerate() {
        let d = crowding_distance(objs, front);
        for (&i, &di) in front.iter().zip(&d) {
            rank[i] = r;
            crowd[i] = di;
        }
    }
    (rank, crowd)
}

/// Keep the `n` best of `ids` by (rank, crowding), ties by log position.
fn select_survivors(ids: &[usize], objs: &[(f64, f64)], n: usize) -> Vec<usize> {
    let (rank, crowd) = rank_and_crowd(objs);
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| rank[a].cmp(&rank[b]).then(crowd[b].total_cmp(&crowd[a])).then(ids[a].cmp(&ids[b])));
    order.into_iter().take(n).map(|k| ids[k]).collect()
}

fn tournament(rng: &mut ChaCha8Rng, rank: &[usize], crowd: &[f64]) -> usize {
    let a = rng.gen_range(0..rank.len());
    let b = rng.gen_range(0..rank.len());
    let better = |x: usize, y: usize| rank[x] < rank[y] || (rank[x] == rank[y] && crowd[x] > crowd[y]);
    if better(b, a) {
        b
    } else {
        a
    }
}

fn mutate(rng: &mut ChaCha8Rng, genome: &mut [usize], levels: usize, rate: f64) {
    if levels < 2 {
        return;
    }
    for g in genome.iter_mut() {
        if rng.gen_bool(rate) {
            // reset to a different level
            let mut v = rng.gen_range(0..levels - 1);
            if v >= *g {
                v += 1;
            }
            *g = v;
        }
    }
}

pub fn nsga2_search<E: Evaluate>(space: &SearchSpace, params: &GaParams, evaluator: &E) -> Result<SearchResult> {
    params.validate()?;
    let mut rng = seeded_rng(params.seed);
    let genes = space.genes();
    let levels = space.alphabet.len();
    let mutation_rate = params.mutation_rate.unwrap_or(1.0 / genes as f64);
    let pop_size = params.population_size;
    let mut archive = Archive {
        space,
        evaluator,
        budget: params.eval_budget,
        objective: params.objective,
        log: Vec::new(),
        genomes: Vec::new(),
        index: HashMap::new(),
    };

    // initial population: the top genome anchors normalization
    let mut initial = vec![space.top_genome()];
    let mut pending: HashSet<Vec<usize>> = initial.iter().cloned().collect();
    while initial.len() < pop_size {
        match unseen_genome(&mut rng, space, &archive.index, &pending) {
            Some(g) => {
                pending.insert(g.clone());
                initial.push(g);
            }
            None => break,
        }
    }
    let mut population = archive.evaluate(initial)?;
    let mut generations_run = 1;
    let mut stalled = false;
    let mut best_hv = archive.hypervolume();
    let mut flat = 0;

    while generations_run < params.generations && archive.remaining() > 0 && !archive.exhausted() {
        let (rank, crowd) = rank_and_crowd(&archive.objectives(&population));
        let mut offspring: Vec<Vec<usize>> = Vec::with_capacity(pop_size);
        let mut pending: HashSet<Vec<usize>> = HashSet::new();
        let quota = pop_size.min(archive.remaining());
        while offspring.len() < quota {
            let p1 = &archive.genomes[population[tournament(&mut rng, &rank, &crowd)]];
            let p2 = &archive.genomes[population[tournament(&mut rng, &rank, &crowd)]];
            let mut child: Vec<usize> = if rng.gen_bool(params.crossover_rate) {
                p1.iter().zip(p2).map(|(&a, &b)| if rng.gen_bool(0.5) { a } else { b }).collect()
            } else {
                p1.clone()
            };
            mutate(&mut rng, &mut child, levels, mutation_rate);
            let fresh =
                |g: &Vec<usize>, pending: &HashSet<Vec<usize>>| !archive.index.contains_key(g) && !pending.contains(g);
            let mut attempts = 0;
            while !fresh(&child, &pending) && attempts < REMUTATE_ATTEMPTS {
                mutate(&mut rng, &mut child, levels, mutation_rate.max(1.0 / genes as f64));
                attempts += 1;
            }
            if !fresh(&child, &pending) {
                match unseen_genome(&mut rng, space, &archive.index, &pending) {
                    Some(g) => child = g,
                    None => break,
                }
            }
            pending.insert(child.clone());
            offspring.push(child);
        }
        if offspring.is_empty() {
            break;
        }
        let children = archive.evaluate(offspring)?;
        generations_run += 1;

        let mut combined = population.clone();
        combined.extend(children);
        population = select_survivors(&combined, &archive.objectives(&combined), pop_size);

        if let Some(limit) = params.stall_generations {
            let hv = archive.hypervolume();
            if hv > best_hv {
                best_hv = hv;
                flat = 0;
            } else {
                flat += 1;
                if flat >= limit {
                    stalled = true;
                    break;
                }
            }
        }
    }
    let frontier = Frontier::from_log(&archive.log, params.objective);
    Ok(SearchResult { log: archive.log, frontier, generations_run, stalled })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::exhaustive::exhaustive_search;
    use crate::fpcore::Width;
    use crate::scope::{Configuration, RuleKind};

    /// Synthetic evaluator: error falls and energy rises with the bits, with
    /// per-target weights so the tradeoff is not trivial.
    struct Synthetic;

    impl Evaluate for Synthetic {
        fn evaluate(&self, c: &Configuration) -> Result<EvalPoint> {
            let w = [1.0, 2.5, 0.7];
            let mut err = 0.0;
            let mut energy = 0.0;
            for (i, &g) in c.genome.iter().enumerate() {
                let f = g as f64 / 24.0;
                err += w[i % 3] * (24 - g) as f64 * (24 - g) as f64 / 50.0;
                energy += f * (1.0 + w[(i + 1) % 3]);
            }
            let total: f64 = (0..c.genome.len()).map(|i| 1.0 + w[(i + 1) % 3]).sum();
            let fpu = 100.0 * energy / total;
            Ok(EvalPoint {
                config: c.clone(),
                error_pct: err,
                fpu_norm: fpu,
                mem_norm: fpu,
                combined_norm: fpu,
                fpu_pj: fpu,
                mem_pj: fpu,
            })
        }
    }

    fn space(genes: usize, alphabet: &[u32]) -> SearchSpace {
        let targets = (0..genes).map(|i| crate::scope::ScopeId::new(format!("f{i}")).unwrap()).collect();
        SearchSpace::new(RuleKind::Cip, Width::Single, targets, alphabet.to_vec()).unwrap()
    }

    #[test]
    fn single_point_space() {
        let s = space(1, &[24]);
        let params = GaParams { population_size: 2, generations: 1, eval_budget: 2, ..GaParams::default() };
        let r = nsga2_search(&s, &params, &Synthetic).unwrap();
        assert_eq!(r.evaluations(), 1);
        assert_eq!(r.frontier.points.len(), 1);
        assert_eq!(r.frontier.points[0].config.genome, vec![24]);
    }

    #[test]
    fn budget_is_a_hard_cap_and_identity_is_first() {
        let s = space(3, &SearchSpace::full_alphabet(Width::Single));
        let r = nsga2_search(&s, &GaParams::default(), &Synthetic).unwrap();
        assert!(r.evaluations() <= 400);
        assert_eq!(r.log[0].config.genome, vec![24, 24, 24]);
        let distinct: HashSet<_> = r.log.iter().map(|p| p.config.genome.clone()).collect();
        assert_eq!(distinct.len(), r.evaluations());
    }

    #[test]
    fn over_budget_params_fail_before_evaluating() {
        let s = space(2, &[6, 12, 18, 24]);
        let params = GaParams { population_size: 40, generations: 11, ..GaParams::default() };
        assert!(matches!(nsga2_search(&s, &params, &Synthetic), Err(Error::Config(_))));
    }

    #[test]
    fn enough_budget_recovers_the_exhaustive_frontier() {
        let s = space(2, &[6, 12, 18, 24]);
        let params = GaParams { population_size: 4, generations: 4, eval_budget: 16, seed: 3, ..GaParams::default() };
        let ga = nsga2_search(&s, &params, &Synthetic).unwrap();
        let ex = exhaustive_search(&s, &Synthetic, Objective::Fpu, u128::MAX).unwrap();
        assert_eq!(ga.evaluations(), 16);
        let key = |f: &Frontier| {
            let mut g: Vec<_> = f.points.iter().map(|p| p.config.genome.clone()).collect();
            g.sort();
            g
        };
        assert_eq!(key(&ga.frontier), key(&ex.frontier));
    }

    #[test]
    fn reproducible_under_a_seed() {
        let s = space(3, &SearchSpace::full_alphabet(Width::Single));
        let params = GaParams { seed: 11, ..GaParams::default() };
        let a = nsga2_search(&s, &params, &Synthetic).unwrap();
        let b = nsga2_search(&s, &params, &Synthetic).unwrap();
        assert_eq!(a.log, b.log);
        let c = nsga2_search(&s, &GaParams { seed: 12, ..params }, &Synthetic).unwrap();
        assert_ne!(a.log, c.log);
    }

    #[test]
    fn stall_flag_stops_early() {
        let s = space(1, &SearchSpace::full_alphabet(Width::Single));
        let params = GaParams {
            population_size: 4,
            generations: 50,
            eval_budget: 200,
            stall_generations: Some(1),
            ..GaParams::default()
        };
        let r = nsga2_search(&s, &params, &Synthetic).unwrap();
        assert!(r.generations_run < 50);
        assert!(r.stalled || r.evaluations() == 24);
    }
}
