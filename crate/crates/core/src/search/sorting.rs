//! Preference sorting and environmental selection for the MOSA family.

use std::collections::BTreeSet;

use super::Individual;

/// Index of the preferred individual for `target`: smallest distance, then shortest
/// test, then lowest index.
fn best_for(population: &[Individual], target: usize) -> usize {
    (0..population.len())
        .min_by(|&a, &b| {
            let (ia, ib) = (&population[a], &population[b]);
            ia.objectives[target]
                .total_cmp(&ib.objectives[target])
                .then(ia.len().cmp(&ib.len()))
                .then(a.cmp(&b))
        })
        .expect("non-empty population")
}

fn dominates(a: &Individual, b: &Individual, objectives: &[usize]) -> bool {
    let mut strictly = false;
    for &t in objectives {
        let (x, y) = (a.objectives[t], b.objectives[t]);
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Non-dominated fronts of `members` on the given objectives, each front in index order.
fn non_dominated_fronts(
    population: &[Individual],
    members: &[usize],
    objectives: &[usize],
) -> Vec<Vec<usize>> {
    let n = members.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&population[members[i]], &population[members[j]]);
            if dominates(a, b, objectives) {
                dominating[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(b, a, objectives) {
                dominating[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominating[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current.iter().map(|&i| members[i]).collect());
        current = next;
    }
    fronts
}

/// Sorts a population into fronts (as indices into `population`).
///
/// Front 0 holds, for every uncovered target, the closest individual to it. The rest
/// are ranked by non-dominated sorting on the uncovered objectives only. With nothing
/// left uncovered everything lands in a single front.
pub fn preference_sorting(population: &[Individual], uncovered: &[usize]) -> Vec<Vec<usize>> {
    assert!(
        !population.is_empty(),
        "preference sorting of an empty population"
    );
    if uncovered.is_empty() {
        return vec![(0..population.len()).collect()];
    }
    let front0: BTreeSet<usize> = uncovered.iter().map(|&t| best_for(population, t)).collect();
    let rest: Vec<usize> = (0..population.len())
        .filter(|i| !front0.contains(i))
        .collect();
    let mut fronts = vec![front0.into_iter().collect::<Vec<_>>()];
    fronts.extend(non_dominated_fronts(population, &rest, uncovered));
    fronts
}

/// Keeps `size` individuals, whole fronts first; the last front is cut in index order.
/// Survivors carry their front index as `rank`.
pub fn environmental_selection(
    mut pool: Vec<Individual>,
    fronts: &[Vec<usize>],
    size: usize,
) -> Vec<Individual> {
    let mut rank_of = vec![usize::MAX; pool.len()];
    let mut chosen = Vec::with_capacity(size);
    'fill: for (rank, front) in fronts.iter().enumerate() {
        for &i in front {
            if chosen.len() == size {
                break 'fill;
            }
            rank_of[i] = rank;
            chosen.push(i);
        }
    }
    let mut slots: Vec<Option<Individual>> = pool.drain(..).map(Some).collect();
    chosen
        .into_iter()
        .map(|i| {
            let mut ind = slots[i].take().expect("index selected once");
            ind.rank = rank_of[i];
            ind
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::api_model::{ActionInstance, TestCase};
    use proptest::prelude::*;

    fn ind(len: usize, objectives: &[f64]) -> Individual {
        Individual {
            test: TestCase::new(
                (0..len)
                    .map(|_| ActionInstance {
                        action: 0,
                        inputs: vec![],
                    })
                    .collect(),
            ),
            objectives: objectives.to_vec(),
            faults: Default::default(),
            rank: 0,
        }
    }

    #[test]
    fn per_target_minima_form_front_zero() {
        let pop = [
            ind(1, &[0.2, 0.9]),
            ind(1, &[0.9, 0.1]),
            ind(1, &[0.5, 0.5]),
        ];
        let fronts = preference_sorting(&pop, &[0, 1]);
        assert_eq!(fronts[0], vec![0, 1]);
        assert_eq!(fronts[1], vec![2]);
    }

    #[test]
    fn shorter_test_wins_ties() {
        let pop = [ind(5, &[0.2, 0.9]), ind(3, &[0.2, 0.9])];
        let fronts = preference_sorting(&pop, &[0, 1]);
        assert_eq!(fronts[0], vec![1]);
        assert_eq!(fronts[1], vec![0]);
    }

    #[test]
    fn mutually_non_dominated_rest_share_front_one() {
        let pop = [
            ind(1, &[0.0, 0.0, 0.5]),
            ind(1, &[0.3, 0.6, 0.9]),
            ind(1, &[0.6, 0.3, 0.9]),
            ind(1, &[0.5, 0.5, 0.8]),
        ];
        // target 2 is covered; only 0 and 1 count
        let fronts = preference_sorting(&pop, &[0, 1]);
        assert_eq!(fronts, vec![vec![0], vec![1, 2, 3]]);
    }

    #[test]
    fn nothing_uncovered_gives_one_front() {
        let pop = [ind(1, &[0.0]), ind(2, &[0.0])];
        assert_eq!(preference_sorting(&pop, &[]), vec![vec![0, 1]]);
    }

    #[test]
    fn selection_keeps_size_and_ranks() {
        let pop = vec![
            ind(1, &[0.2, 0.9]),
            ind(1, &[0.9, 0.1]),
            ind(1, &[0.5, 0.5]),
            ind(1, &[0.95, 0.95]),
        ];
        let fronts = preference_sorting(&pop, &[0, 1]);
        let kept = environmental_selection(pop, &fronts, 3);
        assert_eq!(kept.len(), 3);
        assert_eq!(
            kept.iter().map(|i| i.rank).collect::<Vec<_>>(),
            vec![0, 0, 1]
        );
    }

    fn brute_force_fronts(pop: &[Individual], members: &[usize], objs: &[usize]) -> Vec<usize> {
        // rank = length of the longest dominance chain ending at the member
        let mut rank = vec![0usize; pop.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for &a in members {
                for &b in members {
                    if dominates(&pop[a], &pop[b], objs) && rank[b] < rank[a] + 1 {
                        rank[b] = rank[a] + 1;
                        changed = true;
                    }
                }
            }
        }
        rank
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn fronts_match_dominance_oracle(
            rows in prop::collection::vec((1usize..6, prop::collection::vec(0u8..5, 4)), 1..7),
        ) {
            let pop: Vec<Individual> = rows
                .iter()
                .map(|(len, o)| ind(*len, &o.iter().map(|&x| x as f64 / 4.0).collect::<Vec<_>>()))
                .collect();
            let uncovered = [0, 1, 2, 3];
            let fronts = preference_sorting(&pop, &uncovered);
            let mut seen: Vec<usize> = fronts.iter().flatten().copied().collect();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..pop.len()).collect::<Vec<_>>());
            for &t in &uncovered {
                let best = fronts[0].iter().map(|&i| pop[i].objectives[t]).fold(f64::INFINITY, f64::min);
                prop_assert!(pop.iter().all(|p| p.objectives[t] >= best));
            }
            let rest: Vec<usize> = fronts[1..].iter().flatten().copied().collect();
            let oracle = brute_force_fronts(&pop, &rest, &uncovered);
            for (k, front) in fronts[1..].iter().enumerate() {
                for &i in front {
                    prop_assert_eq!(oracle[i], k);
                }
            }
        }
    }
}
