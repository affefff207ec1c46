//! Many Independent Objective search.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mosa::expect_algorithm;
use super::operators::{mutate, MutationContext};
use super::{Algorithm, Evaluator, Individual, RunResult, SearchConfig, SearchError};
use crate::api_model::random_test;
use crate::sut::Sut;

/// Bounded population of candidates for one uncovered target.
#[derive(Debug, Clone)]
pub struct TargetPopulation {
    capacity: usize,
    members: Vec<Individual>,
    /// Samples drawn since the last improvement.
    pub counter: u64,
}

impl TargetPopulation {
    pub fn new(capacity: usize) -> Self {
        TargetPopulation {
            capacity,
            members: Vec::new(),
            counter: 0,
        }
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    fn key(ind: &Individual, target: usize) -> (f64, usize) {
        (ind.objectives[target], ind.len())
    }

    fn better(a: (f64, usize), b: (f64, usize)) -> bool {
        a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
    }

    /// Adds `ind`, evicting the worst member on overflow (the newest loses ties).
    /// Resets the counter when `ind` strictly beats every previous member.
    pub fn offer(&mut self, ind: &Individual, target: usize) {
        let k = Self::key(ind, target);
        let improves = self
            .members
            .iter()
            .all(|m| Self::better(k, Self::key(m, target)));
        self.members.push(ind.clone());
        if improves {
            self.counter = 0;
        }
        if self.members.len() > self.capacity {
            let mut worst = self.members.len() - 1;
            for i in (0..self.members.len()).rev() {
                if Self::better(
                    Self::key(&self.members[worst], target),
                    Self::key(&self.members[i], target),
                ) {
                    worst = i;
                }
            }
            self.members.remove(worst);
        }
    }

    pub fn clear(&mut self) {
        self.members.clear();
        self.counter = 0;
    }
}

/// MIO: per-target populations, focused sampling late in the budget.
pub fn run_mio(config: &SearchConfig, sut: &mut dyn Sut) -> Result<RunResult, SearchError> {
    expect_algorithm(config, Algorithm::Mio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let catalog = sut.catalog().clone();
    let literals = sut.literals().clone();
    let ctx = MutationContext {
        catalog: &catalog,
        literals: &literals,
        max_test_length: config.max_test_length,
    };
    let mut ev = Evaluator::new(sut, config.budget);
    let mut pops: Vec<TargetPopulation> = (0..ev.target_count())
        .map(|_| TargetPopulation::new(config.mio_capacity))
        .collect();
    let m = config.population_size as u64;
    let mut generation = 0u64;
    let mut since_log = 0u64;

    while !ev.should_stop() {
        let progress = (ev.fraction() / config.mio_focus).min(1.0);
        let p_random = config.mio_random_probability * (1.0 - progress);
        let candidates: Vec<usize> = ev
            .uncovered()
            .into_iter()
            .filter(|&t| !pops[t].is_empty())
            .collect();
        let test = if candidates.is_empty() || rng.gen_bool(p_random) {
            random_test(&catalog, &literals, config.max_test_length, &mut rng)
        } else {
            let low = candidates
                .iter()
                .map(|&t| pops[t].counter)
                .min()
                .unwrap_or(0);
            let tied: Vec<usize> = candidates
                .into_iter()
                .filter(|&t| pops[t].counter == low)
                .collect();
            let target = tied[rng.gen_range(0..tied.len())];
            pops[target].counter += 1;
            let members = pops[target].members();
            let parent = &members[rng.gen_range(0..members.len())].test;
            mutate(parent, progress, &ctx, &mut rng)
        };
        let ind = ev.evaluate(test)?;
        for t in 0..pops.len() {
            if ev.archive.is_covered(t) {
                if !pops[t].is_empty() {
                    pops[t].clear();
                }
            } else if ind.objectives[t] < 1.0 {
                pops[t].offer(&ind, t);
            }
        }
        since_log += 1;
        if since_log == m {
            ev.log_generation(generation, false);
            generation += 1;
            since_log = 0;
        }
    }
    if since_log > 0 {
        ev.log_generation(generation, false);
    }
    Ok(ev.finish(Algorithm::Mio, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api_model::{ActionInstance, TestCase};
    use std::collections::BTreeSet;

    fn ind(len: usize, d: f64) -> Individual {
        Individual {
            test: TestCase::new(
                (0..len)
                    .map(|_| ActionInstance {
                        action: 0,
                        inputs: vec![],
                    })
                    .collect(),
            ),
            objectives: vec![d],
            faults: BTreeSet::new(),
            rank: 0,
        }
    }

    #[test]
    fn capacity_evicts_worst() {
        let mut p = TargetPopulation::new(2);
        p.offer(&ind(1, 0.5), 0);
        p.offer(&ind(1, 0.2), 0);
        p.offer(&ind(1, 0.9), 0);
        assert_eq!(p.len(), 2);
        let ds: Vec<f64> = p.members().iter().map(|m| m.objectives[0]).collect();
        assert_eq!(ds, vec![0.5, 0.2]);
    }

    #[test]
    fn newest_loses_ties_on_overflow() {
        let mut p = TargetPopulation::new(1);
        p.offer(&ind(3, 0.5), 0);
        p.offer(&ind(3, 0.5), 0);
        assert_eq!(p.len(), 1);
        p.offer(&ind(2, 0.5), 0);
        assert_eq!(p.members()[0].len(), 2);
    }

    #[test]
    fn counter_resets_only_on_strict_improvement() {
        let mut p = TargetPopulation::new(5);
        p.offer(&ind(2, 0.5), 0);
        p.counter = 7;
        p.offer(&ind(2, 0.5), 0);
        assert_eq!(p.counter, 7);
        p.offer(&ind(1, 0.5), 0);
        assert_eq!(p.counter, 0);
    }
}
