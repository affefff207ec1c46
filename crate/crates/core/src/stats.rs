//! Rank-sum test, Vargha-Delaney effect size and normalized convergence AUC.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("sample {0} is empty")]
    EmptySample(&'static str),
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("series is empty")]
    EmptySeries,
    #[error("max coverage must be at least 1")]
    ZeroMaxCoverage,
    #[error("budget must be positive, got {0}")]
    BadBudget(f64),
    #[error("series point at {at} lies beyond the budget {budget}")]
    BeyondBudget { at: f64, budget: f64 },
    #[error("series is not monotone at point {0}")]
    NotMonotone(usize),
}

/// Largest combined sample size for which the exact distribution is used.
pub const EXACT_LIMIT: usize = 12;

fn check(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.is_empty() {
        return Err(StatsError::EmptySample("a"));
    }
    if b.is_empty() {
        return Err(StatsError::EmptySample("b"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// Mid-ranks (1-based) of the pooled sample plus the tie-group sizes.
fn pooled_ranks(a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut pooled: Vec<(f64, usize)> = a.iter().chain(b).copied().zip(0..).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < pooled.len() {
        let mut j = i;
        while j + 1 < pooled.len() && pooled[j + 1].0 == pooled[i].0 {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for p in &pooled[i..=j] {
            ranks[p.1] = mid;
        }
        if j > i {
            ties.push(j - i + 1);
        }
        i = j + 1;
    }
    (ranks, ties)
}

/// Number of `k`-subsets of `{1..=n}` with each possible rank sum.
fn subset_sum_counts(n: usize, k: usize) -> Vec<u64> {
    let max = n * (n + 1) / 2;
    let mut c = vec![vec![0u64; max + 1]; k + 1];
    c[0][0] = 1;
    for r in 1..=n {
        for size in (1..=k.min(r)).rev() {
            for s in (r..=max).rev() {
                c[size][s] += c[size - 1][s - r];
            }
        }
    }
    c.swap_remove(k)
}

/// Two-sided p-value of the unpaired Wilcoxon rank-sum (Mann-Whitney) test.
///
/// Exact for small tie-free samples, normal approximation with tie and
/// continuity correction otherwise.
pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check(a, b)?;
    let (n, m) = (a.len(), b.len());
    let total = n + m;
    let (ranks, ties) = pooled_ranks(a, b);
    if total <= EXACT_LIMIT && ties.is_empty() {
        let w = ranks[..n].iter().sum::<f64>().round() as usize;
        return Ok(exact_p(total, n, w));
    }
    let w: f64 = ranks[..n].iter().sum();
    let u = w - (n * (n + 1)) as f64 / 2.0;
    let (nf, mf, tf) = (n as f64, m as f64, total as f64);
    let mean = nf * mf / 2.0;
    let tie_term: f64 =
        ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (tf * (tf - 1.0)).max(1.0);
    let var = nf * mf / 12.0 * ((tf + 1.0) - tie_term);
    if var <= 0.0 {
        return Ok(1.0);
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(libm::erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

fn exact_p(total: usize, n: usize, w: usize) -> f64 {
    let counts = subset_sum_counts(total, n);
    let all: u64 = counts.iter().sum();
    let lower: u64 = counts[..=w].iter().sum();
    let upper: u64 = counts[w..].iter().sum();
    (2.0 * lower.min(upper) as f64 / all as f64).min(1.0)
}

fn wins_losses(a: &[f64], b: &[f64]) -> (u64, u64) {
    let (mut wins, mut losses) = (0, 0);
    for x in a {
        for y in b {
            match x.total_cmp(y) {
                Ordering::Greater => wins += 1,
                Ordering::Less => losses += 1,
                Ordering::Equal => {}
            }
        }
    }
    (wins, losses)
}

/// Probability that a value drawn from `a` exceeds one drawn from `b`, ties counting half.
pub fn vargha_delaney_a12(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check(a, b)?;
    let pairs = (a.len() * b.len()) as u64;
    let (wins, losses) = wins_losses(a, b);
    let ties = pairs - wins - losses;
    let direct = |w: u64| (2 * w + ties) as f64 / (2 * pairs) as f64;
    // the larger side is computed directly so the two orders sum to exactly 1
    Ok(if wins >= losses {
        direct(wins)
    } else {
        1.0 - direct(losses)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Magnitude {
    Negligible,
    Small,
    Medium,
    Large,
}

impl Magnitude {
    pub fn of(a12: f64) -> Self {
        let d = (a12 - 0.5).abs();
        if d < 0.06 {
            Magnitude::Negligible
        } else if d < 0.14 {
            Magnitude::Small
        } else if d < 0.21 {
            Magnitude::Medium
        } else {
            Magnitude::Large
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Magnitude::Negligible => "negligible",
            Magnitude::Small => "small",
            Magnitude::Medium => "medium",
            Magnitude::Large => "large",
        }
    }
}

impl fmt::Display for Magnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub p_value: f64,
    pub a12: f64,
    pub magnitude: Magnitude,
}

impl ComparisonReport {
    pub fn significant(&self) -> bool {
        self.p_value < 0.05
    }
}

pub fn compare(a: &[f64], b: &[f64]) -> Result<ComparisonReport, StatsError> {
    let p_value = wilcoxon_rank_sum(a, b)?;
    let a12 = vargha_delaney_a12(a, b)?;
    Ok(ComparisonReport {
        p_value,
        a12,
        magnitude: Magnitude::of(a12),
    })
}

/// Convergence curve of one run: `(elapsed budget, covered targets)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub samples: Vec<(f64, u64)>,
    pub final_covered: u64,
    pub faults_found: u64,
}

impl RunSeries {
    pub fn new(samples: Vec<(f64, u64)>, faults_found: u64) -> Result<Self, StatsError> {
        for (i, w) in samples.windows(2).enumerate() {
            if w[1].0 < w[0].0 || w[1].1 < w[0].1 {
                return Err(StatsError::NotMonotone(i + 1));
            }
        }
        let final_covered = samples.last().map(|s| s.1).unwrap_or(0);
        Ok(RunSeries {
            samples,
            final_covered,
            faults_found,
        })
    }
}

/// Area under the step curve of covered targets over `[0, budget]`, as a share of
/// the `budget x max_coverage` box. Coverage is 0 before the first point and the
/// last value holds until the budget.
pub fn normalized_auc(
    series: &RunSeries,
    budget: f64,
    max_coverage: u64,
) -> Result<f64, StatsError> {
    if series.samples.is_empty() {
        return Err(StatsError::EmptySeries);
    }
    if max_coverage == 0 {
        return Err(StatsError::ZeroMaxCoverage);
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(StatsError::BadBudget(budget));
    }
    let mut area = 0.0;
    let (mut t, mut c) = (0.0, 0u64);
    for &(at, covered) in &series.samples {
        if at > budget {
            return Err(StatsError::BeyondBudget { at, budget });
        }
        area += (at - t).max(0.0) * c as f64;
        t = t.max(at);
        c = covered;
    }
    area += (budget - t) * c as f64;
    Ok((area / (budget * max_coverage as f64)).clamp(0.0, 1.0))
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptySample("values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    Ok(quantile_sorted(&sorted(values)?, 0.5))
}

/// Interquartile range (third minus first quartile).
pub fn iqr(values: &[f64]) -> Result<f64, StatsError> {
    let v = sorted(values)?;
    Ok(quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25))
}
