//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hsic_explain::benchmarks::generators::{cycle, gen_grid_pattern, GridPattern};
use hsic_explain::benchmarks::metrics::{fidelity, sparsity};
use hsic_explain::benchmarks::{run_case, BenchMethod, CaseId, CaseOptions, CaseReport};
use hsic_explain::kernel::{center_normalize, gram, GramMatrix, Kernel};
use hsic_explain::solvers::oracle::{qp_oracle, Penalty};
use hsic_explain::{
    solve_fused, solve_group, solve_l1, GroupStructure, Method, PatternOracle, SolverConfig, SolverProblem, UnitId,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn all_methods() -> Vec<BenchMethod> {
    vec![
        BenchMethod::Solver(Method::L1),
        BenchMethod::Solver(Method::Group),
        BenchMethod::Solver(Method::Fused),
    ]
}

fn mean(r: &CaseReport, method: &str, metric: &str) -> f64 {
    r.metric(method, metric).map_or(f64::NAN, |m| m.mean)
}

fn run(case: CaseId, methods: &[BenchMethod]) -> CaseReport {
    let r = run_case(case, methods, &SEEDS, &CaseOptions::default()).expect("case runs");
    for e in &r.errors {
        println!("  note: {e}");
    }
    r
}

// ---- benchmark cases ----

fn hub_one() -> Outcome {
    let start = Instant::now();
    let r = run(CaseId::HubOne, &all_methods());
    let elapsed = start.elapsed();
    let (l1, group, fused) = (
        mean(&r, "l1", "top1_acc"),
        mean(&r, "group", "top1_acc"),
        mean(&r, "fused", "top1_acc"),
    );
    Outcome {
        name: "case 1.1 single hub: top-1 acc L1 >= 0.95, group = fused = 1.00, under 5 min",
        pass: l1 >= 0.95 && group == 1.0 && fused == 1.0 && elapsed < Duration::from_secs(300),
        detail: format!("l1={l1:.3} group={group:.3} fused={fused:.3} time={:.1}s", elapsed.as_secs_f64()),
    }
}

fn hub_two() -> Outcome {
    let r = run(CaseId::HubTwo, &[BenchMethod::Solver(Method::L1)]);
    let (a, o) = (mean(&r, "l1", "aacc@6"), mean(&r, "l1", "oacc@6"));
    Outcome {
        name: "case 1.2 two hubs: L1 aacc@6 >= 0.85, oacc@6 = 1.00 (+-0.1)",
        pass: a >= 0.85 && o >= 0.9,
        detail: format!("aacc@6={a:.3} oacc@6={o:.3}"),
    }
}

fn bridge() -> Outcome {
    let r = run(CaseId::Bridge, &all_methods());
    let vals: Vec<f64> = ["l1", "group", "fused"].iter().map(|m| mean(&r, m, "top2_acc")).collect();
    Outcome {
        name: "case 2 bridge edge: top-2 acc = 1.00 for all methods",
        pass: vals.iter().all(|&v| v == 1.0),
        detail: format!("l1={:.3} group={:.3} fused={:.3}", vals[0], vals[1], vals[2]),
    }
}

fn grid() -> Outcome {
    let r = run(
        CaseId::GridPattern,
        &[BenchMethod::Solver(Method::L1), BenchMethod::Solver(Method::Fused)],
    );
    let (l1, fused) = (mean(&r, "l1", "precision@4"), mean(&r, "fused", "precision@4"));
    Outcome {
        name: "case 3 grid pattern: precision@4 >= 0.95 for L1 and fused",
        pass: l1 >= 0.95 && fused >= 0.95,
        detail: format!("l1={l1:.3} fused={fused:.3}"),
    }
}

fn series() -> Outcome {
    let mut methods = all_methods();
    methods.push(BenchMethod::Random);
    let r = run(CaseId::SeriesChunk, &methods);
    let vals: Vec<f64> = ["l1", "group", "fused", "random"]
        .iter()
        .map(|m| mean(&r, m, "precision@tn"))
        .collect();
    Outcome {
        name: "case 5 series chunk: precision@tn >= 0.70 for all methods, random <= 0.2",
        pass: vals[..3].iter().all(|&v| v >= 0.70) && vals[3] <= 0.2,
        detail: format!(
            "l1={:.3} group={:.3} fused={:.3} random={:.3}",
            vals[0], vals[1], vals[2], vals[3]
        ),
    }
}

// ---- random solver problems ----

fn atom(m: usize, rng: &mut ChaCha8Rng) -> GramMatrix {
    let raw = if rng.random_bool(0.5) {
        let s: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random_range(0..2) as f64]).collect();
        gram(&s, Kernel::Delta).unwrap()
    } else {
        let s: Vec<Vec<f64>> = (0..m).map(|_| vec![rng.random::<f64>()]).collect();
        gram(&s, Kernel::Gaussian { sigma: 0.3 }).unwrap()
    };
    center_normalize(&raw, 1e-12)
}

/// Random problem with `p` atoms over `m` samples whose `Q` is well
/// conditioned, so the minimizer is unique and stable.
fn problem(p: usize, m: usize, rng: &mut ChaCha8Rng) -> SolverProblem {
    loop {
        let atoms: Vec<GramMatrix> = (0..p).map(|_| atom(m, rng)).collect();
        let target = atom(m, rng);
        if target.is_degenerate() || atoms.iter().any(GramMatrix::is_degenerate) {
            continue;
        }
        let pr = SolverProblem::new((0..p).map(UnitId::Node).collect(), &atoms, &target).unwrap();
        if pr.q().clone().symmetric_eigen().eigenvalues.min() > 1e-2 {
            return pr;
        }
    }
}

fn tight() -> SolverConfig {
    SolverConfig {
        max_iters: 200_000,
        tol: 1e-12,
        ..SolverConfig::default()
    }
}

fn scores(e: &hsic_explain::Explanation) -> DVector<f64> {
    DVector::from_vec(e.scores.clone())
}

fn maxdiff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// `½αᵀQα − cᵀα + λΣα + μΣ|α_a − α_b|`, computed here rather than by the library.
fn fused_value(p: &SolverProblem, a: &DVector<f64>, lambda: f64, mu: f64, edges: &[(usize, usize)]) -> f64 {
    let smooth = 0.5 * a.dot(&(p.q() * a)) - p.c().dot(a);
    smooth + lambda * a.sum() + mu * edges.iter().map(|&(i, j)| (a[i] - a[j]).abs()).sum::<f64>()
}

/// KKT residual of the nonnegative L1 problem at `a`.
fn l1_kkt(p: &SolverProblem, a: &DVector<f64>, lambda: f64) -> f64 {
    let g = p.q() * a - p.c();
    (0..a.len())
        .filter(|&u| p.q()[(u, u)] > 1e-12)
        .map(|u| if a[u] > 1e-10 { (g[u] + lambda).abs() } else { (-(g[u] + lambda)).max(0.0) })
        .fold(0.0, f64::max)
}

fn random_groups(p: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut groups = Vec::new();
    let mut start = 0;
    while start < p {
        let len = rng.random_range(1..=3).min(p - start);
        // overlap by one with the previous block half the time
        let from = if start > 0 && rng.random_bool(0.5) { start - 1 } else { start };
        groups.push((from..start + len).collect());
        start += len;
    }
    groups
}

fn random_edges(p: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (1..p).map(|i| (rng.random_range(0..i), i)).collect();
    for _ in 0..p / 2 {
        let (a, b) = (rng.random_range(0..p), rng.random_range(0..p));
        if a != b && !edges.contains(&(a.min(b), a.max(b))) {
            edges.push((a.min(b), a.max(b)));
        }
    }
    edges
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst_l1, mut worst_group, mut worst_fused, mut worst_cert) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for i in 0..100 {
        let m = if i % 2 == 0 { 4 } else { 8 };
        let p = rng.random_range(2..=if m == 4 { 6 } else { 8 });
        let pr = problem(p, m, &mut rng);
        let lambda = 10f64.powf(rng.random_range(-4.0..-1.0));
        let mu = 10f64.powf(rng.random_range(-3.0..-0.5));
        let cfg = SolverConfig { lambda, mu, ..tight() };

        let ref_l1 = qp_oracle(&pr, &Penalty::L1 { lambda }).unwrap();
        worst_cert = worst_cert.max(l1_kkt(&pr, &ref_l1, lambda));
        worst_l1 = worst_l1.max(maxdiff(&scores(&solve_l1(&pr, &cfg)), &ref_l1));

        let groups = GroupStructure::new(random_groups(p, &mut rng), p).unwrap();
        let ref_group = qp_oracle(&pr, &Penalty::Group { lambda, groups: groups.clone() }).unwrap();
        worst_group = worst_group.max(maxdiff(&scores(&solve_group(&pr, &groups, &cfg)), &ref_group));

        let edges = random_edges(p, &mut rng);
        let ref_fused = qp_oracle(&pr, &Penalty::Fused { lambda, mu, adjacency: edges.clone() }).unwrap();
        let got = scores(&solve_fused(&pr, &edges, &cfg));
        worst_fused = worst_fused.max(maxdiff(&got, &ref_fused));
        // the reference must not be beaten by the fast solver or by small moves
        let f0 = fused_value(&pr, &ref_fused, lambda, mu, &edges);
        let mut probe_gap = f0 - fused_value(&pr, &got, lambda, mu, &edges);
        let h = 1e-5;
        for u in 0..p {
            for s in [-h, h] {
                let mut a = ref_fused.clone();
                a[u] = (a[u] + s).max(0.0);
                probe_gap = probe_gap.max(f0 - fused_value(&pr, &a, lambda, mu, &edges));
            }
        }
        for &(a_, b_) in &edges {
            for s in [-h, h] {
                let mut a = ref_fused.clone();
                a[a_] = (a[a_] + s).max(0.0);
                a[b_] = (a[b_] + s).max(0.0);
                probe_gap = probe_gap.max(f0 - fused_value(&pr, &a, lambda, mu, &edges));
            }
        }
        worst_cert = worst_cert.max(probe_gap.max(0.0));
    }
    Outcome {
        name: "solver/reference equivalence on 100 problems: L1 1e-5, group 1e-4, fused 1e-3",
        pass: worst_l1 <= 1e-5 && worst_group <= 1e-4 && worst_fused <= 1e-3 && worst_cert <= 1e-8,
        detail: format!(
            "max |diff| l1={worst_l1:.2e} group={worst_group:.2e} fused={worst_fused:.2e}; reference certificate {worst_cert:.2e}"
        ),
    }
}

fn gram_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for i in 0..1000 {
        let m = rng.random_range(2..=30);
        let dim = rng.random_range(1..=3);
        let samples: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..dim).map(|_| rng.random_range(0..3) as f64 * rng.random::<f64>().round()).collect())
            .collect();
        let kernel = if rng.random_bool(0.5) {
            Kernel::Delta
        } else {
            Kernel::Gaussian { sigma: rng.random_range(0.1..3.0) }
        };
        let raw = gram(&samples, kernel).unwrap();
        let k = center_normalize(&raw, 1e-12);
        let v = k.values();
        let sym = (v - v.transpose()).amax();
        let rows = (0..m).map(|r| v.row(r).sum().abs()).fold(0.0, f64::max);
        let norm = v.norm();
        let again = (center_normalize(&k, 1e-12).values() - v).amax();
        // independent centering: HKH / ‖HKH‖ with H built here
        let h = DMatrix::<f64>::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64);
        let hkh = &h * raw.values() * &h;
        let expect = if hkh.norm() > 1e-12 { &hkh / hkh.norm() } else { DMatrix::zeros(m, m) };
        let direct = (&expect - v).amax();
        let norm_ok = if k.is_degenerate() { norm == 0.0 } else { (norm - 1.0).abs() < 1e-10 };
        if sym > 1e-12 || rows > 1e-10 || !norm_ok || again > 1e-10 || direct > 1e-10 {
            failures.push(i);
            continue;
        }
        // a constant atom next to this one must score exactly zero
        let constant = center_normalize(&gram(&vec![vec![1.0]; m], Kernel::Delta).unwrap(), 1e-12);
        let target = center_normalize(&gram(&samples, Kernel::Delta).unwrap(), 1e-12);
        if target.is_degenerate() {
            continue;
        }
        let pr = SolverProblem::new(vec![UnitId::Node(0), UnitId::Node(1)], &[k.clone(), constant], &target).unwrap();
        let cfg = SolverConfig { mu: 0.01, ..SolverConfig::with_lambda(1e-4) };
        let zeroed = solve_l1(&pr, &cfg).scores[1] == 0.0
            && solve_group(&pr, &GroupStructure::new(vec![vec![0, 1]], 2).unwrap(), &cfg).scores[1] == 0.0
            && solve_fused(&pr, &[(0, 1)], &cfg).scores[1] == 0.0;
        if !zeroed {
            failures.push(i);
        }
    }
    Outcome {
        name: "gram invariants on 1000 inputs: symmetry, centering, unit norm, idempotence, degenerate unit scores 0",
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "all 1000 inputs ok".into()
        } else {
            format!("{} failing inputs, first {:?}", failures.len(), &failures[..failures.len().min(5)])
        },
    }
}

fn structural() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut singleton, mut fused0, mut big) = (0.0f64, 0.0f64, 0.0f64);
    let mut path_violations = 0;
    let lambdas: Vec<f64> = (0..=36).map(|i| 10f64.powf(-6.0 + i as f64 / 6.0)).collect();
    for i in 0..50 {
        let p = rng.random_range(2..=8);
        let m = if p <= 6 && i % 2 == 0 { 4 } else { 8 };
        let pr = problem(p, m, &mut rng);
        let lambda = 10f64.powf(rng.random_range(-4.0..-1.0));
        let cfg = SolverConfig { lambda, ..tight() };
        let l1 = scores(&solve_l1(&pr, &cfg));
        singleton = singleton.max(maxdiff(&scores(&solve_group(&pr, &GroupStructure::singletons(p), &cfg)), &l1));
        let edges = random_edges(p, &mut rng);
        fused0 = fused0.max(maxdiff(&scores(&solve_fused(&pr, &edges, &SolverConfig { mu: 0.0, ..cfg })), &l1));
        let huge = SolverConfig { lambda: 10.0, mu: 0.1, ..tight() };
        let groups = GroupStructure::new(random_groups(p, &mut rng), p).unwrap();
        for e in [solve_l1(&pr, &huge), solve_group(&pr, &groups, &huge), solve_fused(&pr, &edges, &huge)] {
            big = big.max(scores(&e).amax());
        }
        let counts: Vec<usize> = lambdas
            .iter()
            .map(|&l| solve_l1(&pr, &SolverConfig { lambda: l, ..tight() }).positive_count())
            .collect();
        if counts.windows(2).any(|w| w[1] > w[0]) {
            path_violations += 1;
        }
    }
    Outcome {
        name: "structural reductions: singleton group = L1, fused mu=0 = L1 (1e-5), large lambda gives 0, monotone lambda path on 50 problems",
        pass: singleton <= 1e-5 && fused0 <= 1e-5 && big == 0.0 && path_violations == 0,
        detail: format!(
            "singleton={singleton:.2e} fused0={fused0:.2e} large-lambda max={big:.1e} path violations={path_violations}/50"
        ),
    }
}

fn metrics() -> Outcome {
    let eps = 0.05;
    let model = PatternOracle::new(4, eps).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (g, truth) = gen_grid_pattern(GridPattern::Line, &mut rng);
    let first = match truth[0] {
        UnitId::Node(v) => v,
        _ => unreachable!(),
    };
    let empty = (g.clone(), BTreeSet::new());
    let flip = (g.clone(), BTreeSet::from([first]));
    let f_empty = fidelity(&model, std::slice::from_ref(&empty)).unwrap();
    let f_flip = fidelity(&model, std::slice::from_ref(&flip)).unwrap();
    let f_avg = fidelity(&model, &[empty, flip]).unwrap();
    let c = cycle(10);
    let s: Vec<f64> = [BTreeSet::from([0, 1]), BTreeSet::new(), (0..10).collect()]
        .into_iter()
        .map(|mask| sparsity(&[(c.clone(), mask)]).unwrap())
        .collect();
    let s_avg = sparsity(&[(c.clone(), BTreeSet::from([0, 1])), (c.clone(), BTreeSet::new())]).unwrap();
    let flip_expected = (1.0 - eps) - eps;
    let pass = f_empty == 0.0
        && f_flip == flip_expected
        && f_avg == flip_expected / 2.0
        && (f_flip - (1.0 - 2.0 * eps)).abs() < 1e-15
        && s == [0.8, 1.0, 0.0]
        && s_avg == 0.9;
    Outcome {
        name: "metric hand values: fidelity 0, 1-2eps, (1-2eps)/2; sparsity 0.8, 1, 0, 0.9",
        pass,
        detail: format!("fidelity={f_empty}, {f_flip}, {f_avg}; sparsity={s:?}, {s_avg}"),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("hub-one", hub_one),
        ("hub-two", hub_two),
        ("bridge", bridge),
        ("grid-pattern", grid),
        ("series-chunk", series),
        ("oracle", oracle_equivalence),
        ("gram", gram_invariants),
        ("structural", structural),
        ("metrics", metrics),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (key, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| key.contains(x.as_str())) {
            continue;
        }
        ran += 1;
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} {} [{}]", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
    }
    println!("acceptance: {} passed, {} failed", ran - failed, failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
