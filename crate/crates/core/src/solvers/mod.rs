//! Non-negative HSIC lasso solvers.
//!
//! All three programs share the smooth part
//! `½‖L̄ − Σ_u α_u K̄_u‖²_F = ½‖L̄‖² − cᵀα + ½αᵀQα` with `Q[u][w] = ⟨K̄_u, K̄_w⟩`
//! and `c[u] = ⟨K̄_u, L̄⟩`, so after [`SolverProblem::new`] the cost of a solve
//! no longer depends on the number of samples.

mod fused;
mod group;
mod l1;
pub mod oracle;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::UnitId;
use crate::kernel::GramMatrix;

pub use fused::solve_fused;
pub use group::solve_group;
pub use l1::solve_l1;

/// Diagonal entries of `Q` below this mark a degenerate unit.
const DEGENERATE_DIAGONAL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    L1,
    Group,
    Fused,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::L1 => "l1",
            Method::Group => "group",
            Method::Fused => "fused",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Method::L1),
            "group" => Ok(Method::Group),
            "fused" => Ok(Method::Fused),
            _ => Err(Error::InvalidArgument(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lambda: f64,
    /// Fusion weight; only the fused solver reads it.
    pub mu: f64,
    pub max_iters: usize,
    /// Relative objective change (and optimality residual) at which a solve
    /// counts as converged.
    pub tol: f64,
    pub admm_rho: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-6,
            mu: 0.0,
            max_iters: 10_000,
            tol: 1e-8,
            admm_rho: 1.0,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::InvalidArgument(format!("{what} = {v} is out of range")));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", self.lambda);
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return bad("mu", self.mu);
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return bad("tol", self.tol);
        }
        if !(self.admm_rho > 0.0 && self.admm_rho.is_finite()) {
            return bad("admm_rho", self.admm_rho);
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// The quadratic data of one explanation problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverProblem {
    units: Vec<UnitId>,
    q: DMatrix<f64>,
    c: DVector<f64>,
    target_sq_norm: f64,
}

impl SolverProblem {
    /// Precomputes all Frobenius inner products. `atoms[u]` is the normalized
    /// Gram matrix of `units[u]`.
    pub fn new(units: Vec<UnitId>, atoms: &[GramMatrix], target: &GramMatrix) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidArgument("no units to explain".into()));
        }
        if units.len() != atoms.len() {
            return Err(Error::InvalidArgument(format!(
                "{} units but {} Gram matrices",
                units.len(),
                atoms.len()
            )));
        }
        if atoms.iter().any(|a| a.size() != target.size()) {
            return Err(Error::InvalidArgument("Gram matrices differ in size".into()));
        }
        let p = atoms.len();
        let rows: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|u| (u..p).map(|w| atoms[u].frobenius_inner(&atoms[w])).collect())
            .collect();
        let mut q = DMatrix::zeros(p, p);
        for (u, row) in rows.iter().enumerate() {
            for (k, &v) in row.iter().enumerate() {
                q[(u, u + k)] = v;
                q[(u + k, u)] = v;
            }
        }
        let c = DVector::from_iterator(p, atoms.iter().map(|a| a.frobenius_inner(target)));
        Ok(Self {
            units,
            q,
            c,
            target_sq_norm: target.frobenius_inner(target),
        })
    }

    /// Builds a problem directly from `Q`, `c` and `‖L̄‖²`.
    pub fn from_parts(units: Vec<UnitId>, q: DMatrix<f64>, c: DVector<f64>, target_sq_norm: f64) -> Result<Self> {
        let p = units.len();
        if p == 0 || q.nrows() != p || q.ncols() != p || c.len() != p {
            return Err(Error::InvalidArgument("inconsistent problem dimensions".into()));
        }
        if (&q - q.transpose()).amax() > 1e-8 {
            return Err(Error::InvalidArgument("Q is not symmetric".into()));
        }
        Ok(Self {
            units,
            q,
            c,
            target_sq_norm,
        })
    }

    pub fn units(&self) -> &[UnitId] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn target_sq_norm(&self) -> f64 {
        self.target_sq_norm
    }

    /// Units whose Gram matrix is zero; their scores are pinned to 0.
    pub fn is_degenerate(&self, u: usize) -> bool {
        self.q[(u, u)] < DEGENERATE_DIAGONAL
    }

    /// `½‖L̄ − Σ α_u K̄_u‖²_F`.
    pub fn loss(&self, alpha: &DVector<f64>) -> f64 {
        0.5 * self.target_sq_norm - self.c.dot(alpha) + 0.5 * alpha.dot(&(&self.q * alpha))
    }

    /// Same problem with units reordered: unit `i` of the result is unit
    /// `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let p = self.len();
        Self {
            units: perm.iter().map(|&i| self.units[i]).collect(),
            q: DMatrix::from_fn(p, p, |i, j| self.q[(perm[i], perm[j])]),
            c: DVector::from_fn(p, |i, _| self.c[perm[i]]),
            target_sq_norm: self.target_sq_norm,
        }
    }
}

/// Overlapping groups of unit indices for the group solver.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupStructure {
    groups: Vec<Vec<usize>>,
}

impl GroupStructure {
    /// Validates `groups` over `n_units` units. Uncovered units are appended
    /// as singleton groups.
    pub fn new(groups: Vec<Vec<usize>>, n_units: usize) -> Result<Self> {
        let mut covered = vec![false; n_units];
        let mut clean = Vec::with_capacity(groups.len());
        for (i, mut g) in groups.into_iter().enumerate() {
            if g.is_empty() {
                return Err(Error::InvalidArgument(format!("group {i} is empty")));
            }
            g.sort_unstable();
            g.dedup();
            if let Some(&u) = g.iter().find(|&&u| u >= n_units) {
                return Err(Error::InvalidArgument(format!(
                    "group {i} names unit {u} but there are only {n_units}"
                )));
            }
            for &u in &g {
                covered[u] = true;
            }
            clean.push(g);
        }
        let missing: Vec<usize> = (0..n_units).filter(|&u| !covered[u]).collect();
        if !missing.is_empty() {
            log::warn!("{} units not in any group; wrapping them as singletons", missing.len());
            clean.extend(missing.into_iter().map(|u| vec![u]));
        }
        Ok(Self { groups: clean })
    }

    /// One group per unit.
    pub fn singletons(n_units: usize) -> Self {
        Self {
            groups: (0..n_units).map(|u| vec![u]).collect(),
        }
    }

    /// Maps groups of unit ids onto indices into `units`.
    pub fn from_unit_groups(groups: &[Vec<UnitId>], units: &[UnitId]) -> Result<Self> {
        let index: std::collections::HashMap<UnitId, usize> = units.iter().enumerate().map(|(i, &u)| (u, i)).collect();
        let groups = groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|u| {
                        index
                            .get(u)
                            .copied()
                            .ok_or_else(|| Error::InvalidArgument(format!("group names unknown unit {u}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups, units.len())
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Scores for every unit plus solver diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub solver: Method,
    pub lambda: f64,
    pub mu: Option<f64>,
    pub units: Vec<UnitId>,
    pub scores: Vec<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl Explanation {
    pub fn score(&self, unit: UnitId) -> Option<f64> {
        self.units.iter().position(|&u| u == unit).map(|i| self.scores[i])
    }

    pub fn positive_count(&self) -> usize {
        self.scores.iter().filter(|&&s| s > 0.0).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("explanation serializes")
    }
}

impl Serialize for Explanation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct Scores<'a>(&'a [UnitId], &'a [f64]);
        impl Serialize for Scores<'_> {
            fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = serializer.serialize_map(Some(self.0.len()))?;
                for (u, s) in self.0.iter().zip(self.1) {
                    map.serialize_entry(&u.to_string(), s)?;
                }
                map.end()
            }
        }
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("solver", &self.solver)?;
        map.serialize_entry("lambda", &self.lambda)?;
        if let Some(mu) = self.mu {
            map.serialize_entry("mu", &mu)?;
        }
        map.serialize_entry("scores", &Scores(&self.units, &self.scores))?;
        map.serialize_entry("objective", &self.objective)?;
        map.serialize_entry("converged", &self.converged)?;
        map.serialize_entry("iterations", &self.iterations)?;
        map.end()
    }
}

/// Coordinate descent on `½αᵀMα + bᵀα` over `α ≥ 0`, starting from `alpha`.
/// Coordinates in `frozen` stay at 0. Returns the number of sweeps and
/// whether the largest coordinate move fell below `tol`.
pub(crate) fn nonneg_cd(
    m: &DMatrix<f64>,
    b: &DVector<f64>,
    alpha: &mut DVector<f64>,
    frozen: &[bool],
    tol: f64,
    max_sweeps: usize,
) -> (usize, bool) {
    let p = alpha.len();
    let mut grad = m * &*alpha + b;
    for sweep in 1..=max_sweeps {
        let mut biggest = 0.0f64;
        for u in 0..p {
            if frozen[u] {
                continue;
            }
            let muu = m[(u, u)];
            let new = (alpha[u] - grad[u] / muu).max(0.0);
            let delta = new - alpha[u];
            if delta != 0.0 {
                alpha[u] = new;
                grad.axpy(delta, &m.column(u), 1.0);
                biggest = biggest.max(delta.abs());
            }
        }
        if biggest < tol {
            return (sweep, true);
        }
    }
    (max_sweeps, false)
}
