//! Selection, recombination and mutation operators.

use rand::seq::SliceRandom;
use rand::Rng;

use super::Individual;
use crate::api_model::{sample_instance, sample_value, ActionCatalog, LiteralPool, TestCase};
use crate::linkage::{donor_subsets, encode, FamilyOfSubsets};

pub const MIN_MUTATIONS: usize = 1;
pub const MAX_MUTATIONS: usize = 10;

/// Everything a mutation needs besides the test itself.
#[derive(Debug, Clone, Copy)]
pub struct MutationContext<'a> {
    pub catalog: &'a ActionCatalog,
    pub literals: &'a LiteralPool,
    pub max_test_length: usize,
}

/// Tournament with replacement: lowest rank wins, then the shorter test, then the earlier draw.
pub fn tournament_selection<R: Rng + ?Sized>(
    population: &[Individual],
    size: usize,
    rng: &mut R,
) -> usize {
    assert!(!population.is_empty(), "tournament on an empty population");
    let mut winner = rng.gen_range(0..population.len());
    for _ in 1..size.max(1) {
        let c = rng.gen_range(0..population.len());
        let (w, x) = (&population[winner], &population[c]);
        if (x.rank, x.len()) < (w.rank, w.len()) {
            winner = c;
        }
    }
    winner
}

/// Single-point crossover at fixed cut points `cut_a ∈ [1, |a|]`, `cut_b ∈ [1, |b|]`.
pub fn crossover_at(
    a: &TestCase,
    b: &TestCase,
    cut_a: usize,
    cut_b: usize,
    max_len: usize,
) -> (TestCase, TestCase) {
    let join = |head: &[_], tail: &[_]| {
        let mut s: Vec<_> = head.iter().chain(tail).cloned().collect();
        s.truncate(max_len);
        TestCase::new(s)
    };
    (
        join(&a.statements[..cut_a], &b.statements[cut_b..]),
        join(&b.statements[..cut_b], &a.statements[cut_a..]),
    )
}

pub fn single_point_crossover<R: Rng + ?Sized>(
    a: &TestCase,
    b: &TestCase,
    max_len: usize,
    rng: &mut R,
) -> (TestCase, TestCase) {
    assert!(!a.is_empty() && !b.is_empty(), "crossover of an empty test");
    let cut_a = rng.gen_range(1..=a.len());
    let cut_b = rng.gen_range(1..=b.len());
    crossover_at(a, b, cut_a, cut_b, max_len)
}

/// One offspring: a copy of `parent` with the donor's statements for one of the donor's
/// FOS subsets injected as a contiguous block, in donor order. Falls back to the first
/// child of single-point crossover when the donor holds no subset.
pub fn linkage_recombination<R: Rng + ?Sized>(
    parent: &TestCase,
    donor: &TestCase,
    fos: &FamilyOfSubsets,
    catalog_len: usize,
    max_len: usize,
    rng: &mut R,
) -> TestCase {
    let candidates = donor_subsets(&encode(donor, catalog_len), fos);
    let Some(subset) = candidates.choose(rng) else {
        return single_point_crossover(parent, donor, max_len, rng).0;
    };
    let block: Vec<_> = donor
        .statements
        .iter()
        .filter(|s| subset.contains(&s.action))
        .cloned()
        .collect();
    let at = rng.gen_range(0..=parent.len());
    let mut statements = parent.statements.clone();
    statements.splice(at..at, block);
    statements.truncate(max_len);
    TestCase::new(statements)
}

/// Elementary mutations applied at a given budget fraction: `round(1 + 9 f)`.
pub fn mutation_count(budget_fraction: f64) -> usize {
    let f = budget_fraction.clamp(0.0, 1.0);
    (MIN_MUTATIONS as f64 + (MAX_MUTATIONS - MIN_MUTATIONS) as f64 * f).round() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StructuralMutation {
    Add,
    Delete,
    Replace,
}

/// Applies a structural mutation at `position`, re-rolling `requested` when it would
/// empty the test or exceed the length bound. Returns the operation applied.
pub fn apply_structural<R: Rng + ?Sized>(
    test: &mut TestCase,
    requested: StructuralMutation,
    position: usize,
    ctx: &MutationContext<'_>,
    rng: &mut R,
) -> StructuralMutation {
    let len = test.len();
    let allowed = |m: StructuralMutation| match m {
        StructuralMutation::Add => len < ctx.max_test_length,
        StructuralMutation::Delete => len > 1,
        StructuralMutation::Replace => len >= 1,
    };
    let op = if allowed(requested) {
        requested
    } else {
        let options: Vec<StructuralMutation> = [
            StructuralMutation::Add,
            StructuralMutation::Delete,
            StructuralMutation::Replace,
        ]
        .into_iter()
        .filter(|&m| m != requested && allowed(m))
        .collect();
        *options.choose(rng).unwrap_or(&StructuralMutation::Replace)
    };
    match op {
        StructuralMutation::Add => {
            let at = position.min(len);
            let a = rng.gen_range(0..ctx.catalog.len());
            let stmt = sample_instance(ctx.catalog, a, at, ctx.literals, rng);
            test.statements.insert(at, stmt);
        }
        StructuralMutation::Delete => {
            test.statements.remove(position.min(len - 1));
        }
        StructuralMutation::Replace => {
            let at = position.min(len - 1);
            let a = rng.gen_range(0..ctx.catalog.len());
            test.statements[at] = sample_instance(ctx.catalog, a, at, ctx.literals, rng);
        }
    }
    op
}

fn random_structural<R: Rng + ?Sized>(test: &mut TestCase, ctx: &MutationContext<'_>, rng: &mut R) {
    let op = *[
        StructuralMutation::Add,
        StructuralMutation::Delete,
        StructuralMutation::Replace,
    ]
    .choose(rng)
    .expect("non-empty");
    let position = match op {
        StructuralMutation::Add => rng.gen_range(0..=test.len()),
        _ => rng.gen_range(0..test.len()),
    };
    apply_structural(test, op, position, ctx, rng);
}

/// Re-samples one input gene of the statement at `position`; false when it has none.
fn mutate_gene_at<R: Rng + ?Sized>(
    test: &mut TestCase,
    position: usize,
    ctx: &MutationContext<'_>,
    rng: &mut R,
) -> bool {
    let stmt = &mut test.statements[position];
    if stmt.inputs.is_empty() {
        return false;
    }
    let g = rng.gen_range(0..stmt.inputs.len());
    let spec = &ctx.catalog[stmt.action];
    match spec.param(&stmt.inputs[g].name) {
        Some(param) => {
            stmt.inputs[g].value = sample_value(param, position, ctx.literals, rng);
            true
        }
        None => false,
    }
}

/// One elementary mutation: structural or input data with equal probability.
pub fn elementary_mutation<R: Rng + ?Sized>(
    test: &mut TestCase,
    ctx: &MutationContext<'_>,
    rng: &mut R,
) {
    if rng.gen_bool(0.5) {
        random_structural(test, ctx, rng);
        return;
    }
    let with_genes: Vec<usize> = (0..test.len())
        .filter(|&i| !test.statements[i].inputs.is_empty())
        .collect();
    match with_genes.choose(rng) {
        Some(&pos) => {
            mutate_gene_at(test, pos, ctx, rng);
        }
        None => random_structural(test, ctx, rng),
    }
}

/// The adaptive operator: `mutation_count(budget_fraction)` elementary mutations.
pub fn mutate<R: Rng + ?Sized>(
    test: &TestCase,
    budget_fraction: f64,
    ctx: &MutationContext<'_>,
    rng: &mut R,
) -> TestCase {
    assert!(!test.is_empty(), "mutation of an empty test");
    let mut out = test.clone();
    for _ in 0..mutation_count(budget_fraction) {
        elementary_mutation(&mut out, ctx, rng);
    }
    out
}

/// Uniform mutation: each statement is mutated with probability `1/L`, by a structural
/// or a data change with equal probability.
pub fn mutate_fixed_rate<R: Rng + ?Sized>(
    test: &TestCase,
    ctx: &MutationContext<'_>,
    rng: &mut R,
) -> TestCase {
    assert!(!test.is_empty(), "mutation of an empty test");
    let mut out = test.clone();
    let p = 1.0 / test.len() as f64;
    let picked: Vec<usize> = (0..test.len()).filter(|_| rng.gen_bool(p)).collect();
    // back to front keeps earlier positions valid
    for &pos in picked.iter().rev() {
        let pos = pos.min(out.len() - 1);
        if rng.gen_bool(0.5) || !mutate_gene_at(&mut out, pos, ctx, rng) {
            let op = *[
                StructuralMutation::Add,
                StructuralMutation::Delete,
                StructuralMutation::Replace,
            ]
            .choose(rng)
            .expect("non-empty");
            apply_structural(&mut out, op, pos, ctx, rng);
        }
    }
    out
}
