use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::Individual;
use crate::api_model::TestCase;
use crate::sut::FaultSignature;

/// Shortest covering test per target.
#[derive(Debug, Clone, Default)]
pub struct Archive {
    slots: Vec<Option<usize>>,
    entries: Vec<Individual>,
}

/// One test of the exported suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub test: TestCase,
    /// Every target this test covers.
    pub covered: Vec<usize>,
    pub faults: Vec<FaultSignature>,
}

impl Archive {
    pub fn new(target_count: usize) -> Self {
        Archive {
            slots: vec![None; target_count],
            entries: Vec::new(),
        }
    }

    pub fn target_count(&self) -> usize {
        self.slots.len()
    }

    pub fn covered_count(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_covered(&self, target: usize) -> bool {
        self.slots[target].is_some()
    }

    pub fn uncovered(&self) -> Vec<usize> {
        (0..self.slots.len())
            .filter(|&t| self.slots[t].is_none())
            .collect()
    }

    pub fn get(&self, target: usize) -> Option<&Individual> {
        self.slots[target].map(|i| &self.entries[i])
    }

    /// Stores `individual` for every target it covers whose slot is empty or holds a
    /// strictly longer test. Returns the number of newly covered targets.
    pub fn update(&mut self, individual: &Individual) -> usize {
        let mut entry = None;
        let mut newly = 0;
        for t in 0..self.slots.len() {
            if !individual.covers(t) {
                continue;
            }
            let replace = match self.slots[t] {
                None => {
                    newly += 1;
                    true
                }
                Some(i) => individual.len() < self.entries[i].len(),
            };
            if replace {
                let idx = *entry.get_or_insert_with(|| {
                    self.entries.push(individual.clone());
                    self.entries.len() - 1
                });
                self.slots[t] = Some(idx);
            }
        }
        if entry.is_some() {
            self.compact();
        }
        newly
    }

    // drop entries no longer referenced by any slot
    fn compact(&mut self) {
        let used: BTreeSet<usize> = self.slots.iter().flatten().copied().collect();
        if used.len() == self.entries.len() {
            return;
        }
        let remap: BTreeMap<usize, usize> = used
            .iter()
            .enumerate()
            .map(|(new, &old)| (old, new))
            .collect();
        let mut kept = Vec::with_capacity(used.len());
        for (i, e) in std::mem::take(&mut self.entries).into_iter().enumerate() {
            if used.contains(&i) {
                kept.push(e);
            }
        }
        self.entries = kept;
        for s in self.slots.iter_mut().flatten() {
            *s = remap[s];
        }
    }

    /// Distinct archived tests in first-stored order.
    pub fn suite(&self) -> Vec<SuiteEntry> {
        self.entries
            .iter()
            .map(|e| SuiteEntry {
                test: e.test.clone(),
                covered: (0..e.objectives.len()).filter(|&t| e.covers(t)).collect(),
                faults: e.faults.iter().cloned().collect(),
            })
            .collect()
    }
}
