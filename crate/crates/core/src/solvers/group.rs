use nalgebra::DVector;

use super::{Explanation, GroupStructure, Method, SolverConfig, SolverProblem};

/// Lifted variables: one copy of each unit per group containing it.
struct Lifted {
    /// `owner[j]` is the unit behind lifted coordinate `j`.
    owner: Vec<usize>,
    /// Coordinate ranges of each group in the lifted vector.
    spans: Vec<std::ops::Range<usize>>,
}

impl Lifted {
    fn new(p: &SolverProblem, groups: &GroupStructure) -> Self {
        let mut owner = Vec::new();
        let mut spans = Vec::new();
        for g in groups.groups() {
            let start = owner.len();
            owner.extend(g.iter().copied().filter(|&u| !p.is_degenerate(u)));
            if owner.len() > start {
                spans.push(start..owner.len());
            }
        }
        Self { owner, spans }
    }

    fn collapse(&self, beta: &DVector<f64>, n: usize) -> DVector<f64> {
        let mut alpha = DVector::zeros(n);
        for (j, &u) in self.owner.iter().enumerate() {
            alpha[u] += beta[j];
        }
        alpha
    }

    fn lift(&self, alpha_grad: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.owner.len(), self.owner.iter().map(|&u| alpha_grad[u]))
    }

    fn penalty(&self, beta: &DVector<f64>) -> f64 {
        self.spans.iter().map(|s| beta.rows(s.start, s.len()).norm()).sum()
    }

    /// Prox of `t·Σ‖β_π‖₂` plus nonnegativity: clip, then shrink each block.
    fn prox(&self, beta: &mut DVector<f64>, t: f64) {
        for s in &self.spans {
            let mut block = beta.rows_mut(s.start, s.len());
            block.apply(|x| *x = x.max(0.0));
            let norm = block.norm();
            let scale = if norm > t { 1.0 - t / norm } else { 0.0 };
            block.scale_mut(scale);
        }
    }
}

/// Largest eigenvalue of the lifted Hessian `AᵀQA` by power iteration.
fn lipschitz(p: &SolverProblem, lifted: &Lifted) -> f64 {
    let n = lifted.owner.len();
    if n == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..500 {
        let w = lifted.lift(&(p.q() * lifted.collapse(&v, p.len())));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= 1e-10 * next.abs() {
            estimate = next;
            break;
        }
        estimate = next;
    }
    // power iteration approaches from below; pad so 1/L stays a safe step
    estimate * 1.01
}

/// Latent group lasso: `α_u = Σ_{π∋u} β_{π,u}` with `β ≥ 0`, minimizing
/// `½‖L̄ − Σ α_u K̄_u‖²_F + λ Σ_π ‖β_π‖₂` by FISTA with function-value restart.
pub fn solve_group(p: &SolverProblem, groups: &GroupStructure, cfg: &SolverConfig) -> Explanation {
    let n = p.len();
    let lambda = cfg.lambda;
    let lifted = Lifted::new(p, groups);
    let m = lifted.owner.len();
    let lip = lipschitz(p, &lifted);
    let finish = |beta: &DVector<f64>, converged, iterations| {
        let alpha = lifted.collapse(beta, n);
        Explanation {
            solver: Method::Group,
            lambda,
            mu: None,
            units: p.units().to_vec(),
            objective: p.loss(&alpha) + lambda * lifted.penalty(beta),
            scores: alpha.iter().copied().collect(),
            converged,
            iterations,
        }
    };
    if m == 0 || lip == 0.0 {
        return finish(&DVector::zeros(m), true, 0);
    }
    let step = 1.0 / lip;
    let objective = |beta: &DVector<f64>| {
        let alpha = lifted.collapse(beta, n);
        p.loss(&alpha) + lambda * lifted.penalty(beta)
    };
    let gradient = |beta: &DVector<f64>| {
        let alpha = lifted.collapse(beta, n);
        lifted.lift(&(p.q() * alpha - p.c()))
    };

    let mut x = DVector::zeros(m);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut prev = objective(&x);
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        iterations = k;
        let mut next = &y - gradient(&y) * step;
        lifted.prox(&mut next, step * lambda);
        let cur = objective(&next);
        if cur > prev {
            // restart momentum and take a plain proximal step from x
            t = 1.0;
            next = &x - gradient(&x) * step;
            lifted.prox(&mut next, step * lambda);
        }
        let cur = objective(&next);
        let moved = (&next - &x).amax() * lip;
        let decrease = prev - cur;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
        prev = cur;
        if decrease.abs() <= cfg.tol * cur.abs().max(1e-300) && moved < cfg.tol {
            converged = true;
            break;
        }
    }
    finish(&x, converged, iterations)
}

/// Owner of each lifted coordinate and the coordinate range of each group,
/// with degenerate units dropped.
pub(crate) fn lifted_parts(p: &SolverProblem, groups: &GroupStructure) -> (Vec<usize>, Vec<std::ops::Range<usize>>) {
    let lifted = Lifted::new(p, groups);
    (lifted.owner, lifted.spans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvers::solve_l1;
    use crate::solvers::test_support::random_problem;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tight(lambda: f64) -> SolverConfig {
        SolverConfig {
            lambda,
            tol: 1e-12,
            max_iters: 200_000,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn singletons_reduce_to_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = random_problem(5, 8, &mut rng);
            let a = solve_l1(&p, &tight(0.02));
            let b = solve_group(&p, &GroupStructure::singletons(5), &tight(0.02));
            for (x, y) in a.scores.iter().zip(&b.scores) {
                assert!((x - y).abs() < 1e-5, "{:?} vs {:?}", a.scores, b.scores);
            }
        }
    }

    #[test]
    fn large_lambda_zeroes_every_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_problem(4, 8, &mut rng);
        let groups = GroupStructure::new(vec![vec![0, 1], vec![1, 2, 3]], 4).unwrap();
        let e = solve_group(&p, &groups, &SolverConfig::with_lambda(10.0));
        assert!(e.scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn prox_is_clip_then_shrink() {
        let lifted = Lifted {
            owner: vec![0, 1, 2],
            spans: vec![0..2, 2..3],
        };
        let mut beta = DVector::from_vec(vec![3.0, -1.0, 0.5]);
        lifted.prox(&mut beta, 1.0);
        assert!((beta[0] - 2.0).abs() < 1e-12);
        assert_eq!(beta[1], 0.0);
        assert_eq!(beta[2], 0.0);
    }
}
