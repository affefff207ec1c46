//! MOSA and LT-MOSA generational loops.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::operators::{
    linkage_recombination, mutate, mutate_fixed_rate, single_point_crossover, tournament_selection,
    MutationContext,
};
use super::sorting::{environmental_selection, preference_sorting};
use super::{Algorithm, Evaluator, Individual, RunResult, SearchConfig, SearchError};
use crate::api_model::random_test;
use crate::linkage::{encode, extract_fos, train_linkage_tree, FamilyOfSubsets, LinkageTree};
use crate::sut::Sut;

/// MOSA with single-point crossover and the uniform `1/L` mutation.
pub fn run_mosa(config: &SearchConfig, sut: &mut dyn Sut) -> Result<RunResult, SearchError> {
    expect_algorithm(config, Algorithm::Mosa)?;
    run_generational(config, sut, false)
}

/// MOSA with a linkage-tree model learned every `linkage_frequency` generations,
/// linkage-based recombination and the adaptive 1-to-10 mutation.
pub fn run_lt_mosa(config: &SearchConfig, sut: &mut dyn Sut) -> Result<RunResult, SearchError> {
    expect_algorithm(config, Algorithm::LtMosa)?;
    run_generational(config, sut, true)
}

pub(super) fn expect_algorithm(
    config: &SearchConfig,
    expected: Algorithm,
) -> Result<(), SearchError> {
    config.validate()?;
    if config.algorithm != expected {
        return Err(SearchError::Config(format!(
            "configuration is for {}, not {expected}",
            config.algorithm
        )));
    }
    Ok(())
}

fn run_generational(
    config: &SearchConfig,
    sut: &mut dyn Sut,
    linkage: bool,
) -> Result<RunResult, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let catalog = sut.catalog().clone();
    let literals = sut.literals().clone();
    let ctx = MutationContext {
        catalog: &catalog,
        literals: &literals,
        max_test_length: config.max_test_length,
    };
    let m = config.population_size;
    let mut ev = Evaluator::new(sut, config.budget);
    let mut trees: Vec<(u64, LinkageTree)> = Vec::new();

    let mut population: Vec<Individual> = Vec::with_capacity(m);
    while population.len() < m && !ev.exhausted() {
        let t = random_test(&catalog, &literals, config.max_test_length, &mut rng);
        population.push(ev.evaluate(t)?);
    }
    let fronts = preference_sorting(&population, &ev.uncovered());
    let mut front0: Vec<Individual> = fronts[0].iter().map(|&i| population[i].clone()).collect();
    population = environmental_selection(population, &fronts, m);

    let mut model: Option<FamilyOfSubsets> = None;
    let mut generation: u64 = 0;
    while !ev.should_stop() {
        // a front too small to learn from leaves no model until the next scheduled step
        let trained = linkage && generation % config.linkage_frequency == 0;
        if trained {
            let encoded: Vec<_> = front0
                .iter()
                .map(|i| encode(&i.test, catalog.len()))
                .collect();
            model = match train_linkage_tree(&encoded) {
                Ok(tree) => {
                    let fos = extract_fos(&tree);
                    if config.keep_linkage_trees {
                        trees.push((generation, tree));
                    }
                    Some(fos)
                }
                Err(_) => None,
            };
        }

        let mut offspring: Vec<Individual> = Vec::with_capacity(m);
        if linkage {
            for _ in 0..m {
                if ev.exhausted() {
                    break;
                }
                let parent = &population
                    [tournament_selection(&population, config.tournament_size, &mut rng)]
                .test;
                let child = if rng.gen_bool(config.crossover_probability) {
                    let donor = &population
                        [tournament_selection(&population, config.tournament_size, &mut rng)]
                    .test;
                    match &model {
                        Some(fos) => linkage_recombination(
                            parent,
                            donor,
                            fos,
                            catalog.len(),
                            config.max_test_length,
                            &mut rng,
                        ),
                        None => {
                            single_point_crossover(parent, donor, config.max_test_length, &mut rng)
                                .0
                        }
                    }
                } else {
                    parent.clone()
                };
                let child = mutate(&child, ev.fraction(), &ctx, &mut rng);
                offspring.push(ev.evaluate(child)?);
            }
        } else {
            while offspring.len() < m && !ev.exhausted() {
                let a = &population
                    [tournament_selection(&population, config.tournament_size, &mut rng)]
                .test;
                let b = &population
                    [tournament_selection(&population, config.tournament_size, &mut rng)]
                .test;
                let (c1, c2) = if rng.gen_bool(config.crossover_probability) {
                    single_point_crossover(a, b, config.max_test_length, &mut rng)
                } else {
                    (a.clone(), b.clone())
                };
                for child in [c1, c2] {
                    if offspring.len() < m && !ev.exhausted() {
                        let child = mutate_fixed_rate(&child, &ctx, &mut rng);
                        offspring.push(ev.evaluate(child)?);
                    }
                }
            }
        }

        let mut pool = population;
        pool.extend(offspring);
        let fronts = preference_sorting(&pool, &ev.uncovered());
        front0 = fronts[0].iter().map(|&i| pool[i].clone()).collect();
        population = environmental_selection(pool, &fronts, m);
        ev.log_generation(generation, trained);
        generation += 1;
    }
    let algorithm = if linkage {
        Algorithm::LtMosa
    } else {
        Algorithm::Mosa
    };
    Ok(ev.finish(algorithm, trees))
}
