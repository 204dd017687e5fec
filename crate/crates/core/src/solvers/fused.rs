use nalgebra::{DMatrix, DVector};

use super::{nonneg_cd, Explanation, Method, SolverConfig, SolverProblem};

fn soft_threshold(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// Drops self-loops, duplicates, and edges touching degenerate units.
pub(crate) fn clean_adjacency(p: &SolverProblem, adjacency: &[(usize, usize)]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = adjacency
        .iter()
        .filter(|&&(a, b)| a != b && a < p.len() && b < p.len())
        .filter(|&&(a, b)| !p.is_degenerate(a) && !p.is_degenerate(b))
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

fn difference_operator(edges: &[(usize, usize)], n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(edges.len(), n);
    for (e, &(a, b)) in edges.iter().enumerate() {
        d[(e, a)] = 1.0;
        d[(e, b)] = -1.0;
    }
    d
}

/// Total objective including both penalties.
pub(crate) fn fused_objective(p: &SolverProblem, edges: &[(usize, usize)], alpha: &DVector<f64>, lambda: f64, mu: f64) -> f64 {
    let fusion: f64 = edges.iter().map(|&(a, b)| (alpha[a] - alpha[b]).abs()).sum();
    p.loss(alpha) + lambda * alpha.sum() + mu * fusion
}

/// Generalized fused lasso:
/// `½‖L̄ − Σ α_u K̄_u‖²_F + λ Σ α_u + μ Σ_{(a,b)} |α_a − α_b|` over `α ≥ 0`.
///
/// ADMM on the split `z = Dα`. The α-step runs coordinate descent on
/// `Q + ρDᵀD`; ρ is rebalanced when one residual dominates the other.
/// Adjacency entries are unit indices; edges touching degenerate units are ignored.
pub fn solve_fused(p: &SolverProblem, adjacency: &[(usize, usize)], cfg: &SolverConfig) -> Explanation {
    let n = p.len();
    let (lambda, mu) = (cfg.lambda, cfg.mu);
    let edges = clean_adjacency(p, adjacency);
    let frozen: Vec<bool> = (0..n).map(|u| p.is_degenerate(u)).collect();
    let e = edges.len();
    let d = difference_operator(&edges, n);
    let dtd = d.transpose() * &d;
    let mut rho = cfg.admm_rho;

    let mut alpha = DVector::zeros(n);
    let mut z = DVector::zeros(e);
    // scaled dual
    let mut w = DVector::zeros(e);
    let mut hessian = p.q() + &dtd * rho;
    let inner_tol = (cfg.tol * 0.1).max(1e-15);
    let (primal_tol, dual_tol) = (cfg.tol * (e.max(1) as f64).sqrt(), cfg.tol * (n as f64).sqrt());
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        iterations = k;
        // α-step: ½αᵀ(Q+ρDᵀD)α + (λ1 − c − ρDᵀ(z − w))ᵀα
        let linear = DVector::from_element(n, lambda) - p.c() - d.transpose() * (&z - &w) * rho;
        nonneg_cd(&hessian, &linear, &mut alpha, &frozen, inner_tol, 1000);

        let d_alpha = &d * &alpha;
        let z_old = z.clone();
        z = (&d_alpha + &w).map(|x| soft_threshold(x, mu / rho));
        let primal = &d_alpha - &z;
        w += &primal;
        let r = primal.norm();
        let s = rho * (d.transpose() * (&z - &z_old)).norm();
        if r < primal_tol && s < dual_tol {
            converged = true;
            break;
        }
        let scale = if r > 10.0 * s {
            2.0
        } else if s > 10.0 * r {
            0.5
        } else {
            1.0
        };
        if scale != 1.0 && e > 0 {
            rho *= scale;
            w /= scale;
            hessian = p.q() + &dtd * rho;
        }
    }
    Explanation {
        solver: Method::Fused,
        lambda,
        mu: Some(mu),
        units: p.units().to_vec(),
        objective: fused_objective(p, &edges, &alpha, lambda, mu),
        scores: alpha.iter().copied().collect(),
        converged,
        iterations,
    }
}
