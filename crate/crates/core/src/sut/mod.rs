//! Executing test cases against a system under test.
//!
//! Two back ends implement [`Sut`]: the in-process [`SimulatedSut`] driven by a
//! scenario file (white-box: line and branch targets with branch distances), and
//! the [`LiveSut`] HTTP adapter (black-box: one target per endpoint and status class).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api_model::{ActionCatalog, HttpMethod, LiteralPool, TestCase};

pub mod distance;
pub mod live;
pub mod simulated;

pub use live::{LiveConfig, LiveSut};
pub use simulated::{Scenario, SimulatedSut};

#[derive(Debug, Error)]
pub enum SutError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("statement {position} references unknown action {action}")]
    UnknownAction { position: usize, action: usize },
    #[error("internal inconsistency in simulated service: {0}")]
    Internal(String),
    #[error(transparent)]
    Model(#[from] crate::api_model::ApiModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    Line,
    BranchTrue,
    BranchFalse,
    /// Black-box target: a response of the given class (2, 3, 4 or 5) for an action.
    ResponseClass(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageTarget {
    pub id: usize,
    pub kind: TargetKind,
    /// Service statement id (white-box) or action index (black-box).
    pub statement: u32,
    pub predicate: Option<u32>,
}

/// A detected server error, unique per endpoint and last executed service statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FaultSignature {
    pub method: HttpMethod,
    pub endpoint: String,
    /// `None` for the live adapter, which cannot observe service internals.
    pub last_statement: Option<u32>,
    pub status: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub objectives: Vec<f64>,
    pub covered: BTreeSet<usize>,
    pub faults: BTreeSet<FaultSignature>,
    pub statuses: Vec<u16>,
}

impl ExecutionResult {
    pub(crate) fn from_objectives(
        objectives: Vec<f64>,
        faults: BTreeSet<FaultSignature>,
        statuses: Vec<u16>,
    ) -> Self {
        let covered = objectives
            .iter()
            .enumerate()
            .filter(|(_, &d)| d == 0.0)
            .map(|(i, _)| i)
            .collect();
        ExecutionResult {
            objectives,
            covered,
            faults,
            statuses,
        }
    }
}

/// A system under test. One test executes at a time per handle.
pub trait Sut: Send {
    fn name(&self) -> &str;
    fn catalog(&self) -> &ActionCatalog;
    fn literals(&self) -> &LiteralPool;
    fn targets(&self) -> &[CoverageTarget];
    /// Restores the initial service state.
    fn reset(&mut self);
    /// Runs every statement in order; later statements run regardless of earlier failures.
    fn execute(&mut self, test: &TestCase) -> Result<ExecutionResult, SutError>;
}

/// All coverage targets, in id order.
pub fn enumerate_targets(sut: &dyn Sut) -> Vec<CoverageTarget> {
    sut.targets().to_vec()
}

pub(crate) fn is_server_error(status: u16) -> bool {
    (500..=599).contains(&status)
}
