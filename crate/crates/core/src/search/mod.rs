//! Search algorithms: MIO, MOSA and LT-MOSA over a [`Sut`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api_model::{TestCase, DEFAULT_MAX_TEST_LENGTH};
use crate::linkage::LinkageTree;
use crate::sut::{FaultSignature, Sut, SutError};

mod archive;
mod mio;
mod mosa;
pub mod operators;
pub mod sorting;

pub use archive::{Archive, SuiteEntry};
pub use mio::{run_mio, TargetPopulation};
pub use mosa::{run_lt_mosa, run_mosa};
pub use operators::{
    linkage_recombination, mutate, mutate_fixed_rate, mutation_count, single_point_crossover,
    tournament_selection, MutationContext,
};
pub use sorting::{environmental_selection, preference_sorting};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sut(#[from] SutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "mio")]
    Mio,
    #[serde(rename = "mosa")]
    Mosa,
    #[serde(rename = "lt-mosa")]
    LtMosa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::LtMosa, Algorithm::Mosa, Algorithm::Mio];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Mio => "mio",
            Algorithm::Mosa => "mosa",
            Algorithm::LtMosa => "lt-mosa",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mio" => Ok(Algorithm::Mio),
            "mosa" => Ok(Algorithm::Mosa),
            "lt-mosa" | "ltmosa" | "lt_mosa" => Ok(Algorithm::LtMosa),
            other => Err(format!("unknown algorithm '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Evaluations(u64),
    Seconds(f64),
}

impl Budget {
    pub fn total(&self) -> f64 {
        match *self {
            Budget::Evaluations(n) => n as f64,
            Budget::Seconds(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    pub population_size: usize,
    pub crossover_probability: f64,
    pub tournament_size: usize,
    /// Generations between linkage-model retraining.
    pub linkage_frequency: u64,
    pub mio_capacity: usize,
    /// Fraction of the budget after which MIO switches to focused search.
    pub mio_focus: f64,
    /// Initial probability of random sampling in MIO.
    pub mio_random_probability: f64,
    pub max_test_length: usize,
    pub budget: Budget,
    pub seed: u64,
    /// Keep every trained linkage tree in the run result.
    #[serde(default)]
    pub keep_linkage_trees: bool,
}

impl SearchConfig {
    pub fn new(algorithm: Algorithm, budget: Budget, seed: u64) -> Self {
        SearchConfig {
            algorithm,
            population_size: 50,
            crossover_probability: 0.75,
            tournament_size: 10,
            linkage_frequency: 10,
            mio_capacity: 10,
            mio_focus: 0.5,
            mio_random_probability: 0.5,
            max_test_length: DEFAULT_MAX_TEST_LENGTH,
            budget,
            seed,
            keep_linkage_trees: false,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(SearchError::Config(format!(
                    "{name} = {p} is not a probability"
                )))
            }
        };
        prob("crossover_probability", self.crossover_probability)?;
        prob("mio_focus", self.mio_focus)?;
        prob("mio_random_probability", self.mio_random_probability)?;
        for (name, v) in [
            ("population_size", self.population_size),
            ("tournament_size", self.tournament_size),
            ("mio_capacity", self.mio_capacity),
            ("max_test_length", self.max_test_length),
        ] {
            if v == 0 {
                return Err(SearchError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.linkage_frequency == 0 {
            return Err(SearchError::Config(
                "linkage_frequency must be at least 1".into(),
            ));
        }
        if !(self.budget.total() > 0.0) {
            return Err(SearchError::Config("budget must be positive".into()));
        }
        Ok(())
    }
}

/// An evaluated test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub test: TestCase,
    pub objectives: Vec<f64>,
    pub faults: BTreeSet<FaultSignature>,
    /// Preference-sorting front index; MOSA family only.
    pub rank: usize,
}

impl Individual {
    pub fn len(&self) -> usize {
        self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test.is_empty()
    }

    pub fn covers(&self, target: usize) -> bool {
        self.objectives[target] == 0.0
    }
}

/// One line of the event log, written at the end of every generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub generation: u64,
    pub evaluations: u64,
    pub covered_count: usize,
    pub model_trained: bool,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl EventRecord {
    /// The record without its wall-clock field, for determinism comparisons.
    pub fn untimed(&self) -> (u64, u64, usize, bool) {
        (
            self.generation,
            self.evaluations,
            self.covered_count,
            self.model_trained,
        )
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub algorithm: Algorithm,
    pub archive: Archive,
    pub events: Vec<EventRecord>,
    pub evaluations: u64,
    pub elapsed_seconds: f64,
    pub started_at_ms: u64,
    pub target_count: usize,
    /// Every distinct fault observed during the run.
    pub faults_seen: BTreeSet<FaultSignature>,
    pub linkage_trees: Vec<(u64, LinkageTree)>,
}

impl RunResult {
    pub fn covered_count(&self) -> usize {
        self.archive.covered_count()
    }

    pub fn suite(&self) -> Vec<SuiteEntry> {
        self.archive.suite()
    }

    /// Distinct faults exposed by the final suite.
    pub fn suite_faults(&self) -> BTreeSet<FaultSignature> {
        self.archive
            .suite()
            .into_iter()
            .flat_map(|e| e.faults)
            .collect()
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Budget accounting, archive maintenance and event logging shared by all algorithms.
pub(crate) struct Evaluator<'a> {
    sut: &'a mut dyn Sut,
    budget: Budget,
    evaluations: u64,
    start: Instant,
    started_at_ms: u64,
    pub archive: Archive,
    pub events: Vec<EventRecord>,
    faults_seen: BTreeSet<FaultSignature>,
}

impl<'a> Evaluator<'a> {
    pub fn new(sut: &'a mut dyn Sut, budget: Budget) -> Self {
        let targets = sut.targets().len();
        Evaluator {
            sut,
            budget,
            evaluations: 0,
            start: Instant::now(),
            started_at_ms: now_ms(),
            archive: Archive::new(targets),
            events: Vec::new(),
            faults_seen: BTreeSet::new(),
        }
    }

    pub fn target_count(&self) -> usize {
        self.archive.target_count()
    }

    pub fn consumed(&self) -> f64 {
        match self.budget {
            Budget::Evaluations(_) => self.evaluations as f64,
            Budget::Seconds(_) => self.start.elapsed().as_secs_f64(),
        }
    }

    /// Consumed share of the budget in `[0, 1]`.
    pub fn fraction(&self) -> f64 {
        (self.consumed() / self.budget.total()).clamp(0.0, 1.0)
    }

    pub fn exhausted(&self) -> bool {
        self.consumed() >= self.budget.total()
    }

    pub fn all_covered(&self) -> bool {
        self.archive.covered_count() == self.archive.target_count()
    }

    pub fn should_stop(&self) -> bool {
        self.exhausted() || self.all_covered()
    }

    pub fn uncovered(&self) -> Vec<usize> {
        self.archive.uncovered()
    }

    /// Resets the service, runs the test and updates the archive.
    pub fn evaluate(&mut self, test: TestCase) -> Result<Individual, SearchError> {
        self.sut.reset();
        let result = self.sut.execute(&test)?;
        self.evaluations += 1;
        self.faults_seen.extend(result.faults.iter().cloned());
        let individual = Individual {
            test,
            objectives: result.objectives,
            faults: result.faults,
            rank: 0,
        };
        self.archive.update(&individual);
        Ok(individual)
    }

    pub fn log_generation(&mut self, generation: u64, model_trained: bool) {
        self.events.push(EventRecord {
            generation,
            evaluations: self.evaluations,
            covered_count: self.archive.covered_count(),
            model_trained,
            timestamp: now_ms(),
        });
    }

    pub fn finish(self, algorithm: Algorithm, linkage_trees: Vec<(u64, LinkageTree)>) -> RunResult {
        RunResult {
            algorithm,
            target_count: self.archive.target_count(),
            archive: self.archive,
            events: self.events,
            evaluations: self.evaluations,
            elapsed_seconds: self.start.elapsed().as_secs_f64(),
            started_at_ms: self.started_at_ms,
            faults_seen: self.faults_seen,
            linkage_trees,
        }
    }
}

/// Runs the algorithm named in the configuration.
pub fn run_search(config: &SearchConfig, sut: &mut dyn Sut) -> Result<RunResult, SearchError> {
    match config.algorithm {
        Algorithm::Mio => run_mio(config, sut),
        Algorithm::Mosa => run_mosa(config, sut),
        Algorithm::LtMosa => run_lt_mosa(config, sut),
    }
}
