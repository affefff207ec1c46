//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest harness so
//! the lines show up in plain `cargo test` output. Set `RESTLINK_ACCEPTANCE_STRICT=1`
//! to exit non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use restlink::api_model::{random_test, ActionCatalog, LiteralPool, TestCase};
use restlink::experiment::{run_experiment, ExperimentPlan, Summary, SutSource};
use restlink::linkage::{
    extract_fos, mutual_information, train_linkage_tree, upgma, EncodedTest, FamilyOfSubsets,
    LinkageNode,
};
use restlink::search::{
    linkage_recombination, preference_sorting, run_search, Algorithm, Budget, Individual,
    SearchConfig,
};
use restlink::stats::{normalized_auc, vargha_delaney_a12, wilcoxon_rank_sum, RunSeries};
use restlink::sut::simulated::SimulatedSut;
use restlink::sut::{CoverageTarget, ExecutionResult, Sut, SutError};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.json"))
}

// ---------------------------------------------------------------- UPGMA

fn random_matrix(rng: &mut ChaCha8Rng, n: usize, integer: bool) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = if integer {
                rng.gen_range(0..5) as f64
            } else {
                rng.gen::<f64>()
            };
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Plain average linkage: every step recomputes every cluster pair from scratch.
fn upgma_oracle(d: &[Vec<f64>]) -> Vec<LinkageNode> {
    let n = d.len();
    let mut nodes: Vec<LinkageNode> = (0..n)
        .map(|i| LinkageNode {
            members: vec![i],
            height: 0.0,
            children: None,
        })
        .collect();
    let mut live: Vec<usize> = (0..n).collect();
    while live.len() > 1 {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for x in 0..live.len() {
            for y in x + 1..live.len() {
                let (a, b) = (&nodes[live[x]].members, &nodes[live[y]].members);
                let mut sum = 0.0;
                for &i in a {
                    for &j in b {
                        sum += d[i][j];
                    }
                }
                let avg = sum / (a.len() * b.len()) as f64;
                let key = (a[0].min(b[0]), a[0].max(b[0]));
                if best.map_or(true, |(bd, bk, _, _)| avg < bd || (avg == bd && key < bk)) {
                    best = Some((avg, key, x, y));
                }
            }
        }
        let (height, _, x, y) = best.unwrap();
        let (l, r) = if nodes[live[x]].members[0] < nodes[live[y]].members[0] {
            (live[x], live[y])
        } else {
            (live[y], live[x])
        };
        let mut members: Vec<usize> = nodes[l]
            .members
            .iter()
            .chain(&nodes[r].members)
            .copied()
            .collect();
        members.sort_unstable();
        nodes.push(LinkageNode {
            members,
            height,
            children: Some((l, r)),
        });
        live.remove(y);
        live[x] = nodes.len() - 1;
    }
    nodes
}

fn upgma_criterion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for case in 0..200 {
        let n = rng.gen_range(1..=8);
        let integer = case % 2 == 0;
        let d = random_matrix(&mut rng, n, integer);
        let got = upgma(&d).nodes;
        let want = upgma_oracle(&d);
        let same = got.len() == want.len()
            && got.iter().zip(&want).all(|(g, w)| {
                g.members == w.members
                    && g.children == w.children
                    && if integer {
                        g.height == w.height
                    } else {
                        (g.height - w.height).abs() <= 1e-12
                    }
            });
        if !same {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        "UPGMA oracle equivalence (200 matrices, N <= 8, < 10 s)",
        mismatches == 0 && secs < 10.0,
        format!("{mismatches} mismatches in {secs:.3} s"),
    )
}

// ---------------------------------------------------------------- MI

fn mi_oracle(a: &[bool], b: &[bool]) -> f64 {
    let m = a.len() as f64;
    let mut mi = 0.0;
    for x in [false, true] {
        for y in [false, true] {
            let pxy = a.iter().zip(b).filter(|&(&p, &q)| p == x && q == y).count() as f64 / m;
            let px = a.iter().filter(|&&p| p == x).count() as f64 / m;
            let py = b.iter().filter(|&&q| q == y).count() as f64 / m;
            if pxy > 0.0 {
                mi += pxy * (pxy / (px * py)).log2();
            }
        }
    }
    mi
}

fn mi_criterion() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let actions = rng.gen_range(2..=6);
        let tests = rng.gen_range(1..=32);
        let density = rng.gen::<f64>();
        let cols: Vec<Vec<bool>> = (0..actions)
            .map(|_| (0..tests).map(|_| rng.gen_bool(density)).collect())
            .collect();
        for i in 0..actions {
            for j in 0..actions {
                worst = worst.max(
                    (mutual_information(&cols[i], &cols[j]) - mi_oracle(&cols[i], &cols[j])).abs(),
                );
            }
        }
    }
    outcome(
        "MI oracle equivalence (200 populations, N <= 6, M <= 32, 1e-9)",
        worst <= 1e-9,
        format!("max deviation {worst:.3e}"),
    )
}

// ---------------------------------------------------------------- Wilcoxon and A12

fn rank_permutation_p(total: usize, a_ranks: u32) -> f64 {
    let n = a_ranks.count_ones();
    let rank_sum = |mask: u32| {
        (0..total)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| i + 1)
            .sum::<usize>()
    };
    let observed = rank_sum(a_ranks);
    let (mut le, mut ge, mut all) = (0u64, 0u64, 0u64);
    for mask in 0u32..(1 << total) {
        if mask.count_ones() == n {
            let s = rank_sum(mask);
            all += 1;
            le += (s <= observed) as u64;
            ge += (s >= observed) as u64;
        }
    }
    (2.0 * le.min(ge) as f64 / all as f64).min(1.0)
}

fn wilcoxon_criterion() -> Outcome {
    let mut checked = 0;
    let mut mismatches = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for total in 2..=10usize {
        for mask in 1u32..(1 << total) - 1 {
            // every split of the ranks 1..=total into two non-empty samples
            let mut a = Vec::new();
            let mut b = Vec::new();
            for i in 0..total {
                // arbitrary monotone values keep the ranks
                let v = (i as f64 + 1.0) * 3.7 + rng.gen::<f64>();
                if mask >> i & 1 == 1 { &mut a } else { &mut b }.push(v);
            }
            checked += 1;
            if wilcoxon_rank_sum(&a, &b).unwrap() != rank_permutation_p(total, mask) {
                mismatches += 1;
            }
        }
    }
    let mut identity_failures = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..25);
        let m = rng.gen_range(1..25);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..30) as f64).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.gen_range(0..30) as f64).collect();
        let sum = vargha_delaney_a12(&a, &b).unwrap() + vargha_delaney_a12(&b, &a).unwrap();
        if sum != 1.0 || vargha_delaney_a12(&a, &a).unwrap() != 0.5 {
            identity_failures += 1;
        }
    }
    outcome(
        "Wilcoxon exact = rank enumeration (|a|+|b| <= 10); A12 identities (1000 pairs)",
        mismatches == 0 && identity_failures == 0,
        format!("{checked} splits, {mismatches} p mismatches, {identity_failures} A12 identity failures"),
    )
}

// ---------------------------------------------------------------- structural invariants

/// Forwards to a simulated service and keeps every executed test with its result.
struct Recording {
    inner: SimulatedSut,
    log: Vec<(TestCase, ExecutionResult)>,
}

impl Sut for Recording {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn catalog(&self) -> &ActionCatalog {
        self.inner.catalog()
    }
    fn literals(&self) -> &LiteralPool {
        self.inner.literals()
    }
    fn targets(&self) -> &[CoverageTarget] {
        self.inner.targets()
    }
    fn reset(&mut self) {
        self.inner.reset()
    }
    fn execute(&mut self, test: &TestCase) -> Result<ExecutionResult, SutError> {
        let r = self.inner.execute(test)?;
        self.log.push((test.clone(), r.clone()));
        Ok(r)
    }
}

fn random_front(rng: &mut ChaCha8Rng) -> Vec<EncodedTest> {
    let actions = rng.gen_range(2..=10);
    let tests = rng.gen_range(2..=20);
    let density = rng.gen_range(0.1..0.9);
    (0..tests)
        .map(|_| EncodedTest {
            bits: (0..actions).map(|_| rng.gen_bool(density)).collect(),
        })
        .collect()
}

fn laminar(fos: &FamilyOfSubsets) -> bool {
    let sets: Vec<BTreeSet<usize>> = fos
        .subsets
        .iter()
        .map(|s| s.iter().copied().collect())
        .collect();
    sets.iter().enumerate().all(|(i, a)| {
        sets[i + 1..]
            .iter()
            .all(|b| a.is_disjoint(b) || a.is_subset(b) || b.is_subset(a))
    })
}

fn random_individuals(rng: &mut ChaCha8Rng, sut: &SimulatedSut) -> Vec<Individual> {
    let mut s = sut.clone();
    let size = rng.gen_range(1..30);
    (0..size)
        .map(|_| {
            let test = random_test(s.catalog(), s.literals(), 12, rng);
            s.reset();
            let r = s.execute(&test).unwrap();
            Individual {
                test,
                objectives: r.objectives,
                faults: r.faults,
                rank: 0,
            }
        })
        .collect()
}

fn is_spliced(child: &TestCase, parent: &TestCase, block: &TestCase) -> bool {
    let (c, p, b) = (&child.statements, &parent.statements, &block.statements);
    (0..=p.len()).any(|at| {
        let full: Vec<_> = p[..at].iter().chain(b.iter()).chain(&p[at..]).collect();
        c.len() <= full.len() && c.iter().zip(&full).all(|(x, y)| x == *y)
    })
}

fn structural_criterion() -> Outcome {
    const CASES: usize = 500;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures: Vec<String> = Vec::new();
    let mut fail = |what: &str, case: usize| failures.push(format!("{what} #{case}"));

    // linkage trees and their families of subsets
    for case in 0..CASES {
        let front = random_front(&mut rng);
        let tree = train_linkage_tree(&front).unwrap();
        if tree.check_invariants().is_err() || tree.leaf_count() != front[0].bits.len() {
            fail("tree invariants", case);
        }
        let fos = extract_fos(&tree);
        if !laminar(&fos) || fos.subsets.len() != tree.leaf_count() - 2 {
            fail("FOS laminarity", case);
        }
    }

    // front 0 holds a closest, then shortest, individual per uncovered target
    let store = SimulatedSut::load(scenario("chained-store")).unwrap();
    let n_targets = store.targets().len();
    for case in 0..CASES {
        let pop = random_individuals(&mut rng, &store);
        let uncovered: Vec<usize> = (0..n_targets).filter(|_| rng.gen_bool(0.7)).collect();
        let fronts = preference_sorting(&pop, &uncovered);
        let ok = uncovered.iter().all(|&t| {
            let best = pop
                .iter()
                .map(|i| i.objectives[t])
                .fold(f64::INFINITY, f64::min);
            let shortest = pop
                .iter()
                .filter(|i| i.objectives[t] == best)
                .map(Individual::len)
                .min();
            fronts[0]
                .iter()
                .any(|&i| pop[i].objectives[t] == best && Some(pop[i].len()) == shortest)
        });
        let mut all: Vec<usize> = fronts.iter().flatten().copied().collect();
        all.sort_unstable();
        if !ok || all != (0..pop.len()).collect::<Vec<_>>() {
            fail("front-0 optimality", case);
        }
    }

    // archive monotonicity and minimality, observed through a recording service
    for case in 0..CASES {
        let algorithm = Algorithm::ALL[case % 3];
        let mut config = SearchConfig::new(
            algorithm,
            Budget::Evaluations(rng.gen_range(60..250)),
            case as u64,
        );
        config.population_size = rng.gen_range(4..20);
        config.linkage_frequency = rng.gen_range(1..4);
        let mut sut = Recording {
            inner: store.clone(),
            log: Vec::new(),
        };
        let run = run_search(&config, &mut sut).unwrap();
        let monotone = run
            .events
            .windows(2)
            .all(|w| w[0].covered_count <= w[1].covered_count);
        let minimal = (0..n_targets).all(|t| {
            let shortest = sut
                .log
                .iter()
                .filter(|(_, r)| r.covered.contains(&t))
                .map(|(x, _)| x.len())
                .min();
            match (run.archive.get(t), shortest) {
                (None, None) => true,
                (Some(a), Some(s)) => a.covers(t) && a.len() == s,
                _ => false,
            }
        });
        if !monotone || !minimal || sut.log.len() as u64 != run.evaluations {
            fail("archive monotonicity/minimality", case);
        }
    }

    // linkage recombination keeps the parent intact around one ordered donor block
    let catalog = store.catalog().clone();
    let literals = store.literals().clone();
    for case in 0..CASES {
        let parent = random_test(&catalog, &literals, 10, &mut rng);
        let donor = random_test(&catalog, &literals, 10, &mut rng);
        let front = (0..rng.gen_range(2..8))
            .map(|_| EncodedTest {
                bits: (0..catalog.len()).map(|_| rng.gen_bool(0.5)).collect(),
            })
            .collect::<Vec<_>>();
        let fos = extract_fos(&train_linkage_tree(&front).unwrap());
        let max_len = rng.gen_range(1..25);
        let child = linkage_recombination(&parent, &donor, &fos, catalog.len(), max_len, &mut rng);
        let donor_bits = restlink::linkage::encode(&donor, catalog.len());
        let candidates = restlink::linkage::donor_subsets(&donor_bits, &fos);
        let ok = if candidates.is_empty() {
            // crossover fallback: a prefix of the parent then a suffix of the donor
            (1..=parent.len()).any(|ca| {
                (1..=donor.len()).any(|cb| {
                    let full: Vec<_> = parent.statements[..ca]
                        .iter()
                        .chain(&donor.statements[cb..])
                        .collect();
                    child.len() == full.len().min(max_len)
                        && child.statements.iter().zip(&full).all(|(x, y)| x == *y)
                })
            })
        } else {
            candidates.iter().any(|subset| {
                let block = TestCase::new(
                    donor
                        .statements
                        .iter()
                        .filter(|s| subset.contains(&s.action))
                        .cloned()
                        .collect(),
                );
                child.len() == (parent.len() + block.len()).min(max_len)
                    && is_spliced(&child, &parent, &block)
            })
        };
        if !ok || child.is_empty() {
            fail("offspring parent-subsequence", case);
        }
    }

    // identical (config, scenario, seed) give identical archives and event logs
    let scenarios: Vec<SimulatedSut> = ["chained-store", "flat-api", "fault-maze"]
        .iter()
        .map(|s| SimulatedSut::load(scenario(s)).unwrap())
        .collect();
    for case in 0..CASES {
        let algorithm = Algorithm::ALL[case % 3];
        let config = SearchConfig::new(
            algorithm,
            Budget::Evaluations(rng.gen_range(50..300)),
            rng.gen(),
        );
        let base = &scenarios[case % scenarios.len()];
        let a = run_search(&config, &mut base.clone()).unwrap();
        let b = run_search(&config, &mut base.clone()).unwrap();
        let events = |r: &restlink::search::RunResult| {
            r.events.iter().map(|e| e.untimed()).collect::<Vec<_>>()
        };
        if a.suite() != b.suite() || events(&a) != events(&b) || a.faults_seen != b.faults_seen {
            fail("seed determinism", case);
        }
    }

    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 120.0;
    let detail = if failures.is_empty() {
        format!("6 properties x {CASES} cases in {secs:.1} s")
    } else {
        format!(
            "{} failures (first: {}) in {secs:.1} s",
            failures.len(),
            failures[0]
        )
    };
    outcome(
        "Structural invariants (trees, FOS, front 0, archive, offspring, determinism; >= 500 cases, < 2 min)",
        pass,
        detail,
    )
}

// ---------------------------------------------------------------- benchmark

struct Benchmark {
    chained: Summary,
    flat: Summary,
    maze: Summary,
    seconds: f64,
}

fn run_benchmark() -> Benchmark {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let plan = ExperimentPlan {
            source: SutSource::Scenario(scenario(name)),
            algorithms: Algorithm::ALL.to_vec(),
            repetitions: 20,
            budget: Budget::Evaluations(20_000),
            seed_base: 7,
            out: dir.path().join(name),
            jobs: None,
            dump_linkage_tree: false,
        };
        run_experiment(&plan).unwrap()
    };
    let chained = run("chained-store");
    let flat = run("flat-api");
    let maze = run("fault-maze");
    Benchmark {
        chained,
        flat,
        maze,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn med(
    s: &Summary,
    a: Algorithm,
    metric: fn(&restlink::experiment::AlgorithmSummary) -> f64,
) -> f64 {
    metric(s.algorithm(a).unwrap())
}

fn directional_criterion(b: &Benchmark) -> Outcome {
    let cov = |s: &restlink::experiment::AlgorithmSummary| s.coverage.median;
    let flt = |s: &restlink::experiment::AlgorithmSummary| s.faults.median;
    let (lt, mosa, mio) = (Algorithm::LtMosa, Algorithm::Mosa, Algorithm::Mio);
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, s) in [("chained-store", &b.chained), ("fault-maze", &b.maze)] {
        let (l, m, i) = (med(s, lt, cov), med(s, mosa, cov), med(s, mio, cov));
        notes.push(format!("{name} coverage {l}/{m}/{i}"));
        pass &= l >= m && l >= i;
    }
    let (l, m, i) = (
        med(&b.maze, lt, flt),
        med(&b.maze, mosa, flt),
        med(&b.maze, mio, flt),
    );
    notes.push(format!("fault-maze faults {l}/{m}/{i}"));
    pass &= l >= m && l >= i;
    let a12 = b
        .chained
        .comparisons
        .iter()
        .find(|c| c.baseline == mosa)
        .map(|c| c.coverage.a12)
        .unwrap();
    notes.push(format!("chained-store A12(lt-mosa, mosa) {a12:.2}"));
    pass &= a12 >= 0.5;
    let flat: Vec<f64> = [lt, mosa, mio]
        .iter()
        .map(|&a| med(&b.flat, a, cov))
        .collect();
    let (lo, hi) = flat
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    notes.push(format!(
        "flat-api coverage {}/{}/{}",
        flat[0], flat[1], flat[2]
    ));
    pass &= hi <= lo * 1.05;
    notes.push(format!("{:.0} s", b.seconds));
    pass &= b.seconds < 900.0;
    outcome(
        "Directional benchmark (lt-mosa/mosa/mio medians, 20 seeds x 20000 evaluations, < 15 min)",
        pass,
        notes.join("; "),
    )
}

fn auc_criterion(b: &Benchmark) -> Outcome {
    let full = RunSeries::new(vec![(0.0, 40)], 0).unwrap();
    let exact = normalized_auc(&full, 20_000.0, 40).unwrap() == 1.0;
    let reported = [&b.chained, &b.flat, &b.maze].iter().all(|s| {
        Algorithm::ALL
            .iter()
            .all(|&a| s.algorithm(a).is_some_and(|x| x.auc.values.len() == 20))
    });
    // per seed: no pair of algorithms is ordered one way by AUC and the other by coverage
    let algs: Vec<_> = b.chained.algorithms.iter().collect();
    let agreeing = (0..b.chained.seeds.len())
        .filter(|&k| {
            algs.iter().all(|x| {
                algs.iter().all(|y| {
                    let dc = x.coverage.values[k] - y.coverage.values[k];
                    let da = x.auc.values[k] - y.auc.values[k];
                    dc * da >= 0.0
                })
            })
        })
        .count();
    outcome(
        "AUC (constant-max = 1, reported per algorithm, chained-store ordering agrees in >= 15/20 seeds)",
        exact && reported && agreeing >= 15,
        format!("constant-max exact: {exact}; reported: {reported}; agreeing seeds {agreeing}/20"),
    )
}

// ---------------------------------------------------------------- schedule

fn schedule_criterion() -> Outcome {
    let store = SimulatedSut::load(scenario("chained-store")).unwrap();
    let mut bad = Vec::new();
    let mut generations = 0;
    for k in [1u64, 5, 10] {
        for seed in 0..3 {
            let mut config = SearchConfig::new(Algorithm::LtMosa, Budget::Evaluations(2_500), seed);
            config.linkage_frequency = k;
            let run = run_search(&config, &mut store.clone()).unwrap();
            generations += run.events.len();
            for e in &run.events {
                if e.model_trained != (e.generation % k == 0) {
                    bad.push(format!("K={k} seed={seed} g={}", e.generation));
                }
            }
        }
    }
    let mosa = run_search(
        &SearchConfig::new(Algorithm::Mosa, Budget::Evaluations(1_000), 0),
        &mut store.clone(),
    )
    .unwrap();
    let baseline_quiet = mosa.events.iter().all(|e| !e.model_trained);
    outcome(
        "Schedule conformance (model trained iff g mod K = 0, K in {1, 5, 10})",
        bad.is_empty() && baseline_quiet && generations > 0,
        format!(
            "{generations} generations checked; {} off-schedule",
            bad.len()
        ),
    )
}

fn main() {
    // `cargo test -- <filter>` passes arguments; a filter that names nothing here skips the suite
    let args: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return;
    }
    let mut results = vec![
        upgma_criterion(),
        mi_criterion(),
        wilcoxon_criterion(),
        structural_criterion(),
    ];
    let bench = run_benchmark();
    results.push(directional_criterion(&bench));
    results.push(auc_criterion(&bench));
    results.push(schedule_criterion());

    println!();
    for r in &results {
        println!(
            "{} {}: {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    // failures are reported above; RESTLINK_ACCEPTANCE_STRICT=1 also turns them into a non-zero exit
    if failed > 0 && std::env::var("RESTLINK_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
