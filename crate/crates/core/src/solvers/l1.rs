use nalgebra::DVector;

use super::{Explanation, Method, SolverConfig, SolverProblem};

/// Largest violation of the optimality conditions of the L1 problem.
pub(crate) fn kkt_violation(p: &SolverProblem, alpha: &DVector<f64>, lambda: f64) -> f64 {
    let qa = p.q() * alpha;
    (0..p.len())
        .filter(|&u| !p.is_degenerate(u))
        .map(|u| {
            let g = p.c()[u] - qa[u] - lambda;
            if alpha[u] > 0.0 {
                g.abs()
            } else {
                g.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Minimizes `½‖L̄ − Σ α_u K̄_u‖²_F + λ Σ α_u` over `α ≥ 0` by cyclic
/// coordinate descent.
///
/// Stops once a sweep lowers the objective by less than `tol` (relative) and
/// the optimality residual is below `tol`.
pub fn solve_l1(p: &SolverProblem, cfg: &SolverConfig) -> Explanation {
    let n = p.len();
    let lambda = cfg.lambda;
    let q = p.q();
    let c = p.c();
    let mut alpha: DVector<f64> = DVector::zeros(n);
    // running Qα
    let mut qa: DVector<f64> = DVector::zeros(n);
    let objective = |alpha: &DVector<f64>| p.loss(alpha) + lambda * alpha.sum();
    let mut prev = objective(&alpha);
    let mut converged = false;
    let mut iterations = 0;
    for sweep in 1..=cfg.max_iters {
        iterations = sweep;
        for u in 0..n {
            if p.is_degenerate(u) {
                continue;
            }
            let quu = q[(u, u)];
            let partial = c[u] - (qa[u] - quu * alpha[u]);
            let new = ((partial - lambda) / quu).max(0.0);
            let delta = new - alpha[u];
            if delta != 0.0 {
                alpha[u] = new;
                qa.axpy(delta, &q.column(u), 1.0);
            }
        }
        let cur = objective(&alpha);
        debug_assert!(cur <= prev + 1e-12 * prev.abs().max(1.0), "objective rose from {prev} to {cur}");
        let decrease = prev - cur;
        prev = cur;
        if decrease <= cfg.tol * cur.abs().max(1e-300) && kkt_violation(p, &alpha, lambda) < cfg.tol {
            converged = true;
            break;
        }
    }
    Explanation {
        solver: Method::L1,
        lambda,
        mu: None,
        units: p.units().to_vec(),
        scores: alpha.iter().copied().collect(),
        objective: prev,
        converged,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::UnitId;
    use crate::solvers::test_support::random_problem;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn units(n: usize) -> Vec<UnitId> {
        (0..n).map(UnitId::Node).collect()
    }

    #[test]
    fn exact_single_atom() {
        let p = SolverProblem::from_parts(units(1), DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 1.0), 1.0)
            .unwrap();
        let e = solve_l1(&p, &SolverConfig::with_lambda(0.0));
        assert!((e.scores[0] - 1.0).abs() < 1e-12);
        assert!(e.objective.abs() < 1e-12);
        assert!(e.converged);
    }

    #[test]
    fn lambda_above_threshold_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let p = random_problem(5, 8, &mut rng);
            let lambda = p.c().max().max(0.0) + 1e-9;
            let e = solve_l1(&p, &SolverConfig::with_lambda(lambda));
            assert!(e.scores.iter().all(|&s| s == 0.0));
        }
    }

    #[test]
    fn degenerate_units_score_zero() {
        let q = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.2, 0.0, 0.0, 0.0, 0.2, 0.0, 1.0]);
        let c = DVector::from_vec(vec![0.6, 0.0, 0.4]);
        let p = SolverProblem::from_parts(units(3), q, c, 1.0).unwrap();
        let e = solve_l1(&p, &SolverConfig::with_lambda(0.0));
        assert_eq!(e.scores[1], 0.0);
        assert!(e.scores[0] > 0.0);
    }

    #[test]
    fn kkt_holds_at_termination() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = random_problem(6, 8, &mut rng);
            let cfg = SolverConfig::with_lambda(0.05);
            let e = solve_l1(&p, &cfg);
            assert!(e.converged);
            let alpha = DVector::from_vec(e.scores.clone());
            assert!(kkt_violation(&p, &alpha, cfg.lambda) < 10.0 * cfg.tol);
        }
    }

    proptest! {
        #[test]
        fn permutation_equivariance(seed in 0u64..1000, lambda in 0.0f64..0.2) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(5, 8, &mut rng);
            let perm = [3usize, 0, 4, 1, 2];
            let a = solve_l1(&p, &SolverConfig::with_lambda(lambda));
            let b = solve_l1(&p.permuted(&perm), &SolverConfig::with_lambda(lambda));
            for (i, &j) in perm.iter().enumerate() {
                prop_assert!((b.scores[i] - a.scores[j]).abs() < 1e-6);
            }
        }
    }
}
