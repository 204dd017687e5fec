//! Slow reference solvers for small problems, used to validate the fast
//! solvers. L1 is solved exactly by active-set enumeration; the group and
//! fused programs by a log-barrier interior-point method on their conic forms.

use nalgebra::{DMatrix, DVector};

use super::fused::clean_adjacency;
use super::group::lifted_parts;
use super::{GroupStructure, SolverProblem};
use crate::error::{Error, Result};

pub const MAX_ORACLE_UNITS: usize = 8;

#[derive(Clone, Debug)]
pub enum Penalty {
    L1 { lambda: f64 },
    Group { lambda: f64, groups: GroupStructure },
    Fused { lambda: f64, mu: f64, adjacency: Vec<(usize, usize)> },
}

/// Reference minimizer `α` of the penalized problem.
pub fn qp_oracle(p: &SolverProblem, penalty: &Penalty) -> Result<DVector<f64>> {
    if p.len() > MAX_ORACLE_UNITS {
        return Err(Error::InvalidArgument(format!(
            "reference solver handles at most {MAX_ORACLE_UNITS} units, got {}",
            p.len()
        )));
    }
    match penalty {
        Penalty::L1 { lambda } => Ok(l1_enumerate(p, *lambda)),
        Penalty::Group { lambda, groups } => Ok(group_barrier(p, groups, *lambda)),
        Penalty::Fused { lambda, mu, adjacency } => Ok(fused_barrier(p, adjacency, *lambda, *mu)),
    }
}

/// Tries every support set, solving the stationarity system on it, and
/// keeps the feasible candidate with the lowest objective.
fn l1_enumerate(p: &SolverProblem, lambda: f64) -> DVector<f64> {
    let live: Vec<usize> = (0..p.len()).filter(|&u| !p.is_degenerate(u)).collect();
    let objective = |a: &DVector<f64>| p.loss(a) + lambda * a.sum();
    let mut best = DVector::zeros(p.len());
    let mut best_obj = objective(&best);
    for mask in 1u32..(1 << live.len()) {
        let support: Vec<usize> = (0..live.len()).filter(|&i| mask & (1 << i) != 0).map(|i| live[i]).collect();
        let k = support.len();
        let qs = DMatrix::from_fn(k, k, |i, j| p.q()[(support[i], support[j])]);
        let rhs = DVector::from_fn(k, |i, _| p.c()[support[i]] - lambda);
        let Some(sol) = qs.lu().solve(&rhs) else { continue };
        if sol.iter().any(|&x| x < 0.0) {
            continue;
        }
        let mut cand = DVector::zeros(p.len());
        for (i, &u) in support.iter().enumerate() {
            cand[u] = sol[i];
        }
        let obj = objective(&cand);
        if obj < best_obj {
            best_obj = obj;
            best = cand;
        }
    }
    best
}

/// `min ½xᵀPx + qᵀx` subject to `Gx > 0` row-wise and second-order cones
/// `x[t] > ‖x[members]‖₂`, from a strictly feasible `x`.
struct Barrier {
    p: DMatrix<f64>,
    q: DVector<f64>,
    g: DMatrix<f64>,
    cones: Vec<(usize, Vec<usize>)>,
}

impl Barrier {
    fn feasible(&self, x: &DVector<f64>) -> bool {
        (&self.g * x).iter().all(|&s| s > 0.0)
            && self
                .cones
                .iter()
                .all(|(t, m)| x[*t] > 0.0 && x[*t] * x[*t] - m.iter().map(|&i| x[i] * x[i]).sum::<f64>() > 0.0)
    }

    fn value(&self, x: &DVector<f64>, tau: f64) -> f64 {
        let mut v = tau * (0.5 * x.dot(&(&self.p * x)) + self.q.dot(x));
        v -= (&self.g * x).iter().map(|s| s.ln()).sum::<f64>();
        for (t, m) in &self.cones {
            v -= (x[*t] * x[*t] - m.iter().map(|&i| x[i] * x[i]).sum::<f64>()).ln();
        }
        v
    }

    fn derivatives(&self, x: &DVector<f64>, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let mut grad = (&self.p * x + &self.q) * tau;
        let mut hess = &self.p * tau;
        let slack = &self.g * x;
        for (k, &s) in slack.iter().enumerate() {
            let row = self.g.row(k).transpose();
            grad -= &row / s;
            hess += &row * row.transpose() / (s * s);
        }
        for (t, m) in &self.cones {
            let u = x[*t] * x[*t] - m.iter().map(|&i| x[i] * x[i]).sum::<f64>();
            let mut du = DVector::zeros(n);
            du[*t] = 2.0 * x[*t];
            for &i in m {
                du[i] = -2.0 * x[i];
            }
            grad -= &du / u;
            hess += &du * du.transpose() / (u * u);
            hess[(*t, *t)] -= 2.0 / u;
            for &i in m {
                hess[(i, i)] += 2.0 / u;
            }
        }
        (grad, hess)
    }

    fn degree(&self) -> f64 {
        (self.g.nrows() + 2 * self.cones.len()) as f64
    }

    fn solve(&self, mut x: DVector<f64>) -> DVector<f64> {
        assert!(self.feasible(&x), "barrier start must be strictly feasible");
        let mut tau = 1.0;
        while self.degree() / tau > 1e-13 {
            for _ in 0..200 {
                let (grad, hess) = self.derivatives(&x, tau);
                let Some(step) = hess.cholesky().map(|c| c.solve(&-&grad)) else { break };
                let decrement = -grad.dot(&step);
                if decrement < 1e-18 {
                    break;
                }
                let f0 = self.value(&x, tau);
                let mut s = 1.0;
                loop {
                    let cand = &x + &step * s;
                    if self.feasible(&cand) && self.value(&cand, tau) <= f0 - 0.25 * s * decrement {
                        x = cand;
                        break;
                    }
                    s *= 0.5;
                    if s < 1e-20 {
                        break;
                    }
                }
                if s < 1e-20 {
                    break;
                }
            }
            tau *= 10.0;
        }
        x
    }
}

/// Variables `[β (lifted), t (one per group)]`.
fn group_barrier(p: &SolverProblem, groups: &GroupStructure, lambda: f64) -> DVector<f64> {
    let n = p.len();
    let (owner, spans) = lifted_parts(p, groups);
    let nb = owner.len();
    let dim = nb + spans.len();
    let mut qp = DMatrix::zeros(dim, dim);
    let mut lin = DVector::zeros(dim);
    for i in 0..nb {
        lin[i] = -p.c()[owner[i]];
        for j in 0..nb {
            qp[(i, j)] = p.q()[(owner[i], owner[j])];
        }
    }
    for k in 0..spans.len() {
        lin[nb + k] = lambda;
    }
    let mut g = DMatrix::zeros(nb, dim);
    for i in 0..nb {
        g[(i, i)] = 1.0;
    }
    let cones = spans.iter().enumerate().map(|(k, s)| (nb + k, s.clone().collect())).collect();
    let barrier = Barrier { p: qp, q: lin, g, cones };
    let mut start = DVector::from_element(dim, 0.1);
    for (k, s) in spans.iter().enumerate() {
        start[nb + k] = 0.1 * (s.len() as f64).sqrt() + 1.0;
    }
    let x = barrier.solve(start);
    let mut alpha = DVector::zeros(n);
    for (i, &u) in owner.iter().enumerate() {
        alpha[u] += x[i];
    }
    alpha
}

/// Variables `[α, s (one per edge)]` with `s_e ≥ |α_a − α_b|`.
fn fused_barrier(p: &SolverProblem, adjacency: &[(usize, usize)], lambda: f64, mu: f64) -> DVector<f64> {
    let n = p.len();
    let edges = clean_adjacency(p, adjacency);
    let live: Vec<usize> = (0..n).filter(|&u| !p.is_degenerate(u)).collect();
    let pos = |u: usize| live.iter().position(|&v| v == u).expect("live unit");
    let k = live.len();
    let dim = k + edges.len();
    let mut qp = DMatrix::zeros(dim, dim);
    let mut lin = DVector::zeros(dim);
    for i in 0..k {
        lin[i] = lambda - p.c()[live[i]];
        for j in 0..k {
            qp[(i, j)] = p.q()[(live[i], live[j])];
        }
    }
    for e in 0..edges.len() {
        lin[k + e] = mu;
    }
    let mut g = DMatrix::zeros(k + 2 * edges.len(), dim);
    for i in 0..k {
        g[(i, i)] = 1.0;
    }
    for (e, &(a, b)) in edges.iter().enumerate() {
        let (a, b) = (pos(a), pos(b));
        let r = k + 2 * e;
        g[(r, k + e)] = 1.0;
        g[(r, a)] = -1.0;
        g[(r, b)] = 1.0;
        g[(r + 1, k + e)] = 1.0;
        g[(r + 1, a)] = 1.0;
        g[(r + 1, b)] = -1.0;
    }
    let barrier = Barrier {
        p: qp,
        q: lin,
        g,
        cones: Vec::new(),
    };
    let mut start = DVector::from_element(dim, 0.1);
    for e in 0..edges.len() {
        start[k + e] = 1.0;
    }
    let x = barrier.solve(start);
    let mut alpha = DVector::zeros(n);
    for (i, &u) in live.iter().enumerate() {
        alpha[u] = x[i];
    }
    alpha
}
