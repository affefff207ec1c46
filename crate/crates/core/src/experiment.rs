//! Experiment grids over (algorithm x seed), result bundles on disk and reports.
//!
//! Bundle layout:
//!
//! ```text
//! <out>/plan.json
//! <out>/<algorithm>/<seed>/events.jsonl
//! <out>/<algorithm>/<seed>/suite.json
//! <out>/<algorithm>/<seed>/linkage_trees.json   (only with tree dumps on)
//! <out>/summary.json
//! <out>/comparisons.json
//! ```

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::api_model::{parse_service_value, LiteralPool};
use crate::search::{
    run_search, Algorithm, Budget, EventRecord, RunResult, SearchConfig, SearchError, SuiteEntry,
};
use crate::stats::{compare, iqr, median, normalized_auc, ComparisonReport, RunSeries, StatsError};
use crate::sut::live::{LiveConfig, LiveSut};
use crate::sut::simulated::SimulatedSut;
use crate::sut::{FaultSignature, Sut, SutError};

/// Marker written when a bundle is incomplete.
pub const PARTIAL_MARKER: &str = "PARTIAL";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    Config(String),
    #[error("cannot load service: {0}")]
    Sut(#[from] SutError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{failed} of {total} runs failed; first: {first}")]
    Partial {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error("incomplete bundle, missing: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl ExperimentError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Partial { .. } | ExperimentError::Incomplete(_) => 3,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// A running service plus the description and literals needed to test it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveTarget {
    #[serde(flatten)]
    pub config: LiveConfig,
    /// Service description document.
    pub service: serde_json::Value,
    #[serde(default)]
    pub literals: LiteralPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SutSource {
    Scenario(PathBuf),
    Live(LiveTarget),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub source: SutSource,
    pub algorithms: Vec<Algorithm>,
    pub repetitions: u32,
    pub budget: Budget,
    pub seed_base: u64,
    pub out: PathBuf,
    /// Worker threads; `None` uses all cores.
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub dump_linkage_tree: bool,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.repetitions == 0 {
            return Err(ExperimentError::Config(
                "repetitions must be at least 1".into(),
            ));
        }
        if self.algorithms.is_empty() {
            return Err(ExperimentError::Config("no algorithms selected".into()));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                return Err(ExperimentError::Config(format!(
                    "algorithm {a} listed twice"
                )));
            }
        }
        if self.jobs == Some(0) {
            return Err(ExperimentError::Config("jobs must be at least 1".into()));
        }
        if !(self.budget.total() > 0.0) {
            return Err(ExperimentError::Config("budget must be positive".into()));
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repetitions as u64).map(move |r| self.seed_base + r)
    }

    pub fn runs(&self) -> Vec<(Algorithm, u64)> {
        self.algorithms
            .iter()
            .flat_map(|&a| self.seeds().map(move |s| (a, s)))
            .collect()
    }
}

/// What the bundle records about the plan, enough to re-read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub service: String,
    pub target_count: usize,
    pub algorithms: Vec<Algorithm>,
    pub seeds: Vec<u64>,
    pub budget: Budget,
}

/// Contents of `suite.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub target_count: usize,
    pub evaluations: u64,
    pub elapsed_seconds: f64,
    pub started_at_ms: u64,
    /// Every distinct fault observed during the search.
    pub faults: Vec<FaultSignature>,
    pub tests: Vec<SuiteEntry>,
}

impl RunRecord {
    /// Targets covered by the suite, recomputed from its tests.
    pub fn covered_count(&self) -> usize {
        let mut seen = vec![false; self.target_count];
        for t in self.tests.iter().flat_map(|e| &e.covered) {
            if let Some(s) = seen.get_mut(*t) {
                *s = true;
            }
        }
        seen.into_iter().filter(|&s| s).count()
    }
}

enum Factory {
    Simulated(SimulatedSut),
    Live(LiveTarget),
}

impl Factory {
    fn load(source: &SutSource) -> Result<Self, ExperimentError> {
        Ok(match source {
            SutSource::Scenario(path) => Factory::Simulated(SimulatedSut::load(path)?),
            SutSource::Live(target) => {
                let f = Factory::Live(target.clone());
                f.build()?;
                f
            }
        })
    }

    fn build(&self) -> Result<Box<dyn Sut>, SutError> {
        Ok(match self {
            Factory::Simulated(s) => Box::new(s.clone()),
            Factory::Live(t) => {
                let catalog = parse_service_value(&t.service)?;
                Box::new(LiveSut::new(t.config.clone(), catalog, t.literals.clone())?)
            }
        })
    }
}

fn run_dir(out: &Path, algorithm: Algorithm, seed: u64) -> PathBuf {
    out.join(algorithm.as_str()).join(seed.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ExperimentError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn write_run(
    dir: &Path,
    seed: u64,
    result: &RunResult,
    dump_trees: bool,
) -> Result<(), ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let events = dir.join("events.jsonl");
    let mut w = std::io::BufWriter::new(fs::File::create(&events).map_err(io_err(&events))?);
    for e in &result.events {
        let line = serde_json::to_string(e).expect("event records serialize");
        writeln!(w, "{line}").map_err(io_err(&events))?;
    }
    w.flush().map_err(io_err(&events))?;
    let record = RunRecord {
        algorithm: result.algorithm,
        seed,
        target_count: result.target_count,
        evaluations: result.evaluations,
        elapsed_seconds: result.elapsed_seconds,
        started_at_ms: result.started_at_ms,
        faults: result.faults_seen.iter().cloned().collect(),
        tests: result.suite(),
    };
    write_json(&dir.join("suite.json"), &record)?;
    if dump_trees {
        let trees: Vec<serde_json::Value> = result
            .linkage_trees
            .iter()
            .map(|(g, t)| serde_json::json!({ "generation": g, "tree": t.to_json() }))
            .collect();
        write_json(&dir.join("linkage_trees.json"), &trees)?;
    }
    Ok(())
}

/// Runs every (algorithm, seed) pair of the plan and writes the bundle.
///
/// A failing run leaves the other runs on disk, writes the partial marker and
/// returns [`ExperimentError::Partial`].
pub fn run_experiment(plan: &ExperimentPlan) -> Result<Summary, ExperimentError> {
    plan.validate()?;
    let factory = Factory::load(&plan.source)?;
    let probe = factory.build()?;
    let manifest = BundleManifest {
        service: probe.name().to_string(),
        target_count: probe.targets().len(),
        algorithms: plan.algorithms.clone(),
        seeds: plan.seeds().collect(),
        budget: plan.budget,
    };
    drop(probe);
    fs::create_dir_all(&plan.out).map_err(io_err(&plan.out))?;
    let marker = plan.out.join(PARTIAL_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(io_err(&marker))?;
    }
    write_json(&plan.out.join("plan.json"), &manifest)?;

    let jobs = match (&plan.source, plan.jobs) {
        (SutSource::Live(_), j) => {
            if j.is_some_and(|j| j > 1) {
                warn!("a live service is shared state; running sequentially");
            }
            1
        }
        (_, Some(j)) => j,
        (_, None) => rayon::current_num_threads(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;
    let runs = plan.runs();
    let outcomes: Vec<Result<(), String>> = pool.install(|| {
        runs.par_iter()
            .map(|&(algorithm, seed)| {
                let label = format!("{algorithm}/{seed}");
                let mut sut = factory.build().map_err(|e| format!("{label}: {e}"))?;
                let mut config = SearchConfig::new(algorithm, plan.budget, seed);
                config.keep_linkage_trees = plan.dump_linkage_tree;
                let result = run_search(&config, sut.as_mut())
                    .map_err(|e: SearchError| format!("{label}: {e}"))?;
                info!(
                    "{label}: {} of {} targets, {} faults, {} evaluations",
                    result.covered_count(),
                    result.target_count,
                    result.faults_seen.len(),
                    result.evaluations
                );
                write_run(
                    &run_dir(&plan.out, algorithm, seed),
                    seed,
                    &result,
                    plan.dump_linkage_tree,
                )
                .map_err(|e| format!("{label}: {e}"))
            })
            .collect()
    });
    let failures: Vec<String> = outcomes.into_iter().filter_map(Result::err).collect();
    if !failures.is_empty() {
        fs::write(&marker, failures.join("\n") + "\n").map_err(io_err(&marker))?;
        return Err(ExperimentError::Partial {
            failed: failures.len(),
            total: runs.len(),
            first: failures[0].clone(),
        });
    }
    let summary = summarize(&plan.out)?;
    write_json(&plan.out.join("summary.json"), &summary)?;
    write_json(&plan.out.join("comparisons.json"), &summary.comparisons)?;
    Ok(summary)
}

fn read_events(path: &Path) -> Result<Vec<EventRecord>, ExperimentError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&line).map_err(|source| ExperimentError::Json {
                path: path.to_path_buf(),
                source,
            })?,
        );
    }
    Ok(events)
}

/// Convergence series of one run on the budget axis. The final state is appended
/// when the log does not already end there, so runs that finished during
/// initialization still have a curve.
pub fn convergence_series(
    events: &[EventRecord],
    record: &RunRecord,
    budget: Budget,
) -> Result<RunSeries, StatsError> {
    let x = |e: &EventRecord| match budget {
        Budget::Evaluations(_) => e.evaluations as f64,
        Budget::Seconds(_) => e.timestamp.saturating_sub(record.started_at_ms) as f64 / 1000.0,
    };
    let mut samples: Vec<(f64, u64)> = events
        .iter()
        .map(|e| (x(e), e.covered_count as u64))
        .collect();
    let final_x = match budget {
        Budget::Evaluations(_) => record.evaluations as f64,
        Budget::Seconds(total) => record.elapsed_seconds.min(total),
    };
    let final_covered = record.covered_count() as u64;
    if samples
        .last()
        .map_or(true, |&(t, c)| t < final_x || c < final_covered)
    {
        let t = samples.last().map_or(final_x, |&(t, _)| t.max(final_x));
        samples.push((t, final_covered));
    }
    let total = budget.total();
    for s in &mut samples {
        s.0 = s.0.min(total);
    }
    RunSeries::new(samples, record.faults.len() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub median: f64,
    pub iqr: f64,
    /// Per-seed values in seed order.
    pub values: Vec<f64>,
}

impl Distribution {
    fn of(values: Vec<f64>) -> Result<Self, StatsError> {
        Ok(Distribution {
            median: median(&values)?,
            iqr: iqr(&values)?,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub coverage: Distribution,
    pub faults: Distribution,
    pub auc: Distribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub subject: Algorithm,
    pub baseline: Algorithm,
    pub coverage: ComparisonReport,
    pub faults: ComparisonReport,
    pub auc: ComparisonReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub service: String,
    pub target_count: usize,
    pub budget: Budget,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub comparisons: Vec<Comparison>,
}

impl Summary {
    pub fn algorithm(&self, a: Algorithm) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|s| s.algorithm == a)
    }
}

/// Recomputes the summary of a bundle from its raw per-run files.
pub fn summarize(dir: &Path) -> Result<Summary, ExperimentError> {
    let manifest: BundleManifest = read_json(&dir.join("plan.json"))?;
    let mut missing = Vec::new();
    for &a in &manifest.algorithms {
        for &s in &manifest.seeds {
            let rd = run_dir(dir, a, s);
            for f in ["events.jsonl", "suite.json"] {
                if !rd.join(f).is_file() {
                    missing.push(format!("{a}/{s}/{f}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(ExperimentError::Incomplete(missing));
    }
    let mut algorithms = Vec::new();
    for &a in &manifest.algorithms {
        let (mut cov, mut faults, mut auc) = (Vec::new(), Vec::new(), Vec::new());
        for &s in &manifest.seeds {
            let rd = run_dir(dir, a, s);
            let record: RunRecord = read_json(&rd.join("suite.json"))?;
            let events = read_events(&rd.join("events.jsonl"))?;
            let series = convergence_series(&events, &record, manifest.budget)?;
            cov.push(record.covered_count() as f64);
            faults.push(record.faults.len() as f64);
            auc.push(normalized_auc(
                &series,
                manifest.budget.total(),
                manifest.target_count.max(1) as u64,
            )?);
        }
        algorithms.push(AlgorithmSummary {
            algorithm: a,
            coverage: Distribution::of(cov)?,
            faults: Distribution::of(faults)?,
            auc: Distribution::of(auc)?,
        });
    }
    let mut comparisons = Vec::new();
    if let Some(subject) = algorithms.iter().find(|s| s.algorithm == Algorithm::LtMosa) {
        for baseline in [Algorithm::Mio, Algorithm::Mosa] {
            if let Some(b) = algorithms.iter().find(|s| s.algorithm == baseline) {
                comparisons.push(Comparison {
                    subject: Algorithm::LtMosa,
                    baseline,
                    coverage: compare(&subject.coverage.values, &b.coverage.values)?,
                    faults: compare(&subject.faults.values, &b.faults.values)?,
                    auc: compare(&subject.auc.values, &b.auc.values)?,
                });
            }
        }
    }
    Ok(Summary {
        service: manifest.service,
        target_count: manifest.target_count,
        budget: manifest.budget,
        seeds: manifest.seeds,
        algorithms,
        comparisons,
    })
}

/// Recomputes a bundle's statistics and renders them as text tables.
pub fn report(dir: &Path) -> Result<String, ExperimentError> {
    if dir.join(PARTIAL_MARKER).exists() {
        let failed = fs::read_to_string(dir.join(PARTIAL_MARKER)).unwrap_or_default();
        return Err(ExperimentError::Incomplete(
            failed
                .lines()
                .map(str::to_string)
                .filter(|l| !l.is_empty())
                .collect(),
        ));
    }
    Ok(render(&summarize(dir)?))
}

pub fn render(summary: &Summary) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "service {} | {} targets | {} seeds",
        summary.service,
        summary.target_count,
        summary.seeds.len()
    );
    let tables: [(&str, fn(&AlgorithmSummary) -> &Distribution, usize); 3] = [
        ("Covered targets", |s| &s.coverage, 1),
        ("Detected faults", |s| &s.faults, 1),
        ("Normalized AUC", |s| &s.auc, 4),
    ];
    for (title, pick, prec) in tables {
        let _ = writeln!(out, "\n{title}");
        let _ = writeln!(out, "{:<10} {:>12} {:>12}", "algorithm", "median", "iqr");
        for s in &summary.algorithms {
            let d = pick(s);
            let _ = writeln!(
                out,
                "{:<10} {:>12.prec$} {:>12.prec$}",
                s.algorithm.as_str(),
                d.median,
                d.iqr
            );
        }
    }
    if !summary.comparisons.is_empty() {
        let metrics: [(&str, fn(&Comparison) -> &ComparisonReport); 3] = [
            ("coverage", |c| &c.coverage),
            ("faults", |c| &c.faults),
            ("auc", |c| &c.auc),
        ];
        for (name, pick) in metrics {
            let _ = writeln!(out, "\nSignificance ({name}); * marks p < 0.05");
            let _ = writeln!(out, "{:<18} {:>10} {:>18}", "comparison", "p-value", "A12");
            for c in &summary.comparisons {
                let r = pick(c);
                let mark = if r.significant() { "*" } else { " " };
                let _ = writeln!(
                    out,
                    "{:<18} {:>9.4}{mark} {:>18}",
                    format!("{} vs {}", c.subject, c.baseline),
                    r.p_value,
                    format!("{:.2} ({})", r.a12, r.magnitude)
                );
            }
        }
    }
    out
}
