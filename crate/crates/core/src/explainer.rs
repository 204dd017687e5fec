//! End-to-end pipeline: perturb, build Gram matrices, solve, rank.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Target, UnitId, UnitKind};
use crate::kernel::{output_gram, unit_gram, KernelConfig};
use crate::model::BlackBoxModel;
use crate::perturbation::{generate, walk_groups, AuxiliaryDataset, PerturbationScheme};
use crate::solvers::{solve_fused, solve_group, solve_l1, Explanation, GroupStructure, Method, SolverConfig, SolverProblem};

pub const DEFAULT_WALK_LEN: usize = 3;

/// Where the group solver gets its groups.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupSource {
    /// Random-walk groups; `n_walks` defaults to twice the node count.
    Walks {
        n_walks: Option<usize>,
        walk_len: usize,
        seed: u64,
    },
    /// Explicit groups, as unit ids in their string form.
    Explicit { groups: Vec<Vec<String>> },
}

impl Default for GroupSource {
    fn default() -> Self {
        GroupSource::Walks {
            n_walks: None,
            walk_len: DEFAULT_WALK_LEN,
            seed: 0,
        }
    }
}

/// Everything about an explanation except the target and the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainSettings {
    pub unit_kind: UnitKindName,
    pub scheme: PerturbationScheme,
    #[serde(default)]
    pub kernels: KernelConfig,
    pub method: Method,
    #[serde(default)]
    pub groups: GroupSource,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Serializable wrapper around [`UnitKind`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitKindName {
    Node,
    Edge,
    NodeTime,
}

impl From<UnitKindName> for UnitKind {
    fn from(k: UnitKindName) -> Self {
        match k {
            UnitKindName::Node => UnitKind::Node,
            UnitKindName::Edge => UnitKind::Edge,
            UnitKindName::NodeTime => UnitKind::NodeTime,
        }
    }
}

impl From<UnitKind> for UnitKindName {
    fn from(k: UnitKind) -> Self {
        match k {
            UnitKind::Node => UnitKindName::Node,
            UnitKind::Edge => UnitKindName::Edge,
            UnitKind::NodeTime => UnitKindName::NodeTime,
        }
    }
}

pub struct ExplainRequest<'a> {
    pub target: Target<'a>,
    pub model: &'a dyn BlackBoxModel,
    pub settings: ExplainSettings,
}

/// A solved-for problem: the quadratic data plus the structure each
/// regularizer needs. Reusable across regularization parameters.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub dataset: AuxiliaryDataset,
    pub problem: SolverProblem,
    pub groups: GroupStructure,
    pub adjacency: Vec<(usize, usize)>,
}

impl Prepared {
    pub fn solve(&self, method: Method, cfg: &SolverConfig) -> Explanation {
        match method {
            Method::L1 => solve_l1(&self.problem, cfg),
            Method::Group => solve_group(&self.problem, &self.groups, cfg),
            Method::Fused => solve_fused(&self.problem, &self.adjacency, cfg),
        }
    }
}

/// Runs perturbation and Gram construction for `req`.
pub fn prepare(req: &ExplainRequest<'_>) -> Result<Prepared> {
    let s = &req.settings;
    s.kernels.validate()?;
    s.solver.validate()?;
    let kind: UnitKind = s.unit_kind.into();
    let dataset = generate(req.target, req.model, &s.scheme, kind)?;
    let target_gram = output_gram(&dataset, &s.kernels)?;
    let atoms = dataset
        .unit_features
        .par_iter()
        .map(|f| unit_gram(f, &s.kernels))
        .collect::<Result<Vec<_>>>()?;
    let degenerate = atoms.iter().filter(|a| a.is_degenerate()).count();
    if degenerate > 0 {
        log::warn!("{degenerate} of {} units were never changed by perturbation", atoms.len());
    }
    let problem = SolverProblem::new(dataset.units.clone(), &atoms, &target_gram)?;
    let groups = build_groups(req.target, &dataset.units, kind, &s.groups)?;
    let adjacency = unit_adjacency(req.target, &dataset.units);
    Ok(Prepared {
        dataset,
        problem,
        groups,
        adjacency,
    })
}

/// Explains `req.target` with the configured method.
pub fn explain(req: &ExplainRequest<'_>) -> Result<Explanation> {
    let prepared = prepare(req)?;
    Ok(prepared.solve(req.settings.method, &req.settings.solver))
}

fn build_groups(target: Target<'_>, units: &[UnitId], kind: UnitKind, source: &GroupSource) -> Result<GroupStructure> {
    match source {
        GroupSource::Explicit { groups } => {
            let parsed = groups
                .iter()
                .map(|g| g.iter().map(|u| u.parse::<UnitId>()).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            GroupStructure::from_unit_groups(&parsed, units)
        }
        GroupSource::Walks {
            n_walks,
            walk_len,
            seed,
        } => {
            let unit_groups = match target {
                Target::Graph(g) => walk_groups(g, kind, n_walks.unwrap_or(2 * g.num_nodes()).max(1), *walk_len, *seed)?,
                Target::Series(s) => {
                    // walks on the first snapshot, replicated across time
                    let first = s
                        .snapshots()
                        .first()
                        .ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
                    let walks = walk_groups(
                        first,
                        UnitKind::Node,
                        n_walks.unwrap_or(2 * first.num_nodes()).max(1),
                        *walk_len,
                        *seed,
                    )?;
                    let mut out = Vec::with_capacity(walks.len() * s.len());
                    for time in 0..s.len() {
                        for w in &walks {
                            let g: Vec<UnitId> = w
                                .iter()
                                .filter_map(|u| match *u {
                                    UnitId::Node(node) if node < s.snapshots()[time].num_nodes() => {
                                        Some(UnitId::NodeTime { node, time })
                                    }
                                    _ => None,
                                })
                                .collect();
                            if !g.is_empty() {
                                out.push(g);
                            }
                        }
                    }
                    out
                }
            };
            GroupStructure::from_unit_groups(&unit_groups, units)
        }
    }
}

/// Fusion graph over unit indices: graph edges for nodes, shared endpoints
/// for edges, and spatial plus consecutive-time links for node-time units.
pub fn unit_adjacency(target: Target<'_>, units: &[UnitId]) -> Vec<(usize, usize)> {
    let index: HashMap<UnitId, usize> = units.iter().enumerate().map(|(i, &u)| (u, i)).collect();
    let mut adj = BTreeSet::new();
    let mut link = |a: UnitId, b: UnitId| {
        if let (Some(&i), Some(&j)) = (index.get(&a), index.get(&b)) {
            if i != j {
                adj.insert((i.min(j), i.max(j)));
            }
        }
    };
    match target {
        Target::Graph(g) => {
            for &(a, b) in g.edges() {
                link(UnitId::Node(a), UnitId::Node(b));
            }
            for v in 0..g.num_nodes() {
                let incident: Vec<UnitId> = g.neighbors(v).iter().map(|&w| UnitId::edge(v, w)).collect();
                for i in 0..incident.len() {
                    for j in (i + 1)..incident.len() {
                        link(incident[i], incident[j]);
                    }
                }
            }
        }
        Target::Series(s) => {
            for (time, g) in s.snapshots().iter().enumerate() {
                for &(a, b) in g.edges() {
                    link(UnitId::NodeTime { node: a, time }, UnitId::NodeTime { node: b, time });
                }
                for node in 0..g.num_nodes() {
                    link(UnitId::NodeTime { node, time }, UnitId::NodeTime { node, time: time + 1 });
                }
            }
        }
    }
    adj.into_iter().collect()
}

/// Units by descending score, ties by ascending id, zero scores dropped.
pub fn rank_units(e: &Explanation, top_k: usize) -> Vec<UnitId> {
    let mut scored: Vec<(UnitId, f64)> = e
        .units
        .iter()
        .copied()
        .zip(e.scores.iter().copied())
        .filter(|&(_, s)| s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(top_k).map(|(u, _)| u).collect()
}

/// `1e-9, 1e-8, …, 1`.
pub fn lambda_grid() -> Vec<f64> {
    (-9..=0).map(|e| 10f64.powi(e)).collect()
}

/// Default search grid: λ alone, or λ × μ for the fused method.
pub fn default_grid(method: Method, base: &SolverConfig) -> Vec<SolverConfig> {
    let mut out = Vec::new();
    for lambda in lambda_grid() {
        if method == Method::Fused {
            for mu in lambda_grid() {
                out.push(SolverConfig { lambda, mu, ..*base });
            }
        } else {
            out.push(SolverConfig { lambda, ..*base });
        }
    }
    out
}

/// Outcome of a grid search.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub config: SolverConfig,
    pub metric: f64,
    pub positive_units: usize,
}

/// Picks the grid point with the best mean validation metric; ties go to the
/// earliest point in grid order (the smallest λ for the default grids). A
/// handful of validation targets ties many points, and preferring the sparsest
/// of them tends to pick a λ that truncates test rankings below `k`.
pub fn select_from_prepared<F>(
    validation: &[(Prepared, Vec<UnitId>)],
    method: Method,
    grid: &[SolverConfig],
    metric: F,
) -> Result<Selection>
where
    F: Fn(&Explanation, &[UnitId]) -> f64 + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty parameter grid".into()));
    }
    if validation.is_empty() {
        return Err(Error::InvalidArgument("empty validation set".into()));
    }
    let scored: Vec<Selection> = grid
        .par_iter()
        .map(|cfg| {
            let mut total = 0.0;
            let mut positive = 0;
            for (prep, truth) in validation {
                let e = prep.solve(method, cfg);
                total += metric(&e, truth);
                positive += e.positive_count();
            }
            Selection {
                config: *cfg,
                metric: total / validation.len() as f64,
                positive_units: positive,
            }
        })
        .collect();
    let mut best = &scored[0];
    for s in &scored[1..] {
        if s.metric > best.metric + 1e-12 {
            best = s;
        }
    }
    Ok(best.clone())
}

/// Grid search over `grid` using freshly prepared validation targets.
pub fn select_lambda<F>(
    model: &dyn BlackBoxModel,
    settings: &ExplainSettings,
    validation: &[(Target<'_>, Vec<UnitId>)],
    grid: &[SolverConfig],
    metric: F,
) -> Result<Selection>
where
    F: Fn(&Explanation, &[UnitId]) -> f64 + Sync,
{
    let prepared = validation
        .iter()
        .map(|(target, truth)| {
            let req = ExplainRequest {
                target: *target,
                model,
                settings: settings.clone(),
            };
            Ok((prepare(&req)?, truth.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    select_from_prepared(&prepared, settings.method, grid, metric)
}

/// Uniformly random scores, for sanity baselines.
pub fn random_explanation(units: &[UnitId], seed: u64) -> Explanation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Explanation {
        solver: Method::L1,
        lambda: 0.0,
        mu: None,
        units: units.to_vec(),
        scores: units.iter().map(|_| rng.random::<f64>() + f64::MIN_POSITIVE).collect(),
        objective: 0.0,
        converged: true,
        iterations: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::generators::{cycle, wheel, wheel_hub};
    use crate::benchmarks::metrics::top_k_acc;
    use crate::graph::{Graph, GraphSeries};
    use crate::model::HubOracle;
    use crate::perturbation::PerturbationKind;

    fn settings(method: Method, lambda: f64) -> ExplainSettings {
        ExplainSettings {
            unit_kind: UnitKindName::Node,
            scheme: PerturbationScheme::new(PerturbationKind::RemoveNodes { k: 2 }, 201, 1),
            kernels: KernelConfig::default(),
            method,
            groups: GroupSource::default(),
            solver: SolverConfig::with_lambda(lambda),
        }
    }

    fn explanation(units: &[usize], scores: &[f64]) -> Explanation {
        Explanation {
            solver: Method::L1,
            lambda: 0.0,
            mu: None,
            units: units.iter().map(|&v| UnitId::Node(v)).collect(),
            scores: scores.to_vec(),
            objective: 0.0,
            converged: true,
            iterations: 0,
        }
    }

    #[test]
    fn ranking_rules() {
        let e = explanation(&[2, 0, 1], &[0.5, 0.5, 0.0]);
        assert_eq!(rank_units(&e, 3), vec![UnitId::Node(0), UnitId::Node(2)]);
        assert!(rank_units(&explanation(&[0, 1], &[0.0, 0.0]), 5).is_empty());
        assert_eq!(rank_units(&explanation(&[0, 1, 2], &[0.1, 0.3, 0.2]), 1), vec![UnitId::Node(1)]);
    }

    #[test]
    fn hub_tops_the_wheel() {
        let g = wheel(10);
        let model = HubOracle::default();
        for method in [Method::L1, Method::Group, Method::Fused] {
            let mut s = settings(method, 1e-6);
            s.solver.mu = 1e-6;
            let e = explain(&ExplainRequest {
                target: Target::Graph(&g),
                model: &model,
                settings: s,
            })
            .unwrap();
            assert_eq!(e.units.len(), 10);
            assert_eq!(rank_units(&e, 1), vec![UnitId::Node(wheel_hub(10))], "{method}");
        }
    }

    #[test]
    fn constant_model_is_degenerate() {
        let g = cycle(10);
        let err = explain(&ExplainRequest {
            target: Target::Graph(&g),
            model: &HubOracle::default(),
            settings: settings(Method::L1, 1e-6),
        })
        .unwrap_err();
        assert!(matches!(err, Error::ConstantModel));
    }

    #[test]
    fn explanations_are_deterministic() {
        let g = wheel(8);
        let run = || {
            explain(&ExplainRequest {
                target: Target::Graph(&g),
                model: &HubOracle::default(),
                settings: settings(Method::L1, 1e-4),
            })
            .unwrap()
            .to_json()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adjacency_by_unit_kind() {
        let path = Graph::structure(3, [(0, 1), (1, 2)]).unwrap();
        let nodes = Target::Graph(&path).units(UnitKind::Node).unwrap();
        assert_eq!(unit_adjacency(Target::Graph(&path), &nodes), vec![(0, 1), (1, 2)]);
        let edges = Target::Graph(&path).units(UnitKind::Edge).unwrap();
        assert_eq!(unit_adjacency(Target::Graph(&path), &edges), vec![(0, 1)]);
        let series = GraphSeries::new(vec![path.clone(), path]).unwrap();
        let nt = Target::Series(&series).units(UnitKind::NodeTime).unwrap();
        let adj = unit_adjacency(Target::Series(&series), &nt);
        // 2 spatial edges per snapshot + 3 temporal links
        assert_eq!(adj.len(), 7);
    }

    #[test]
    fn selection_keeps_grid_order_on_ties() {
        let g = wheel(7);
        let model = HubOracle::default();
        let s = settings(Method::L1, 1e-6);
        let truth = vec![UnitId::Node(wheel_hub(7))];
        let grid = [SolverConfig::with_lambda(1e-9), SolverConfig::with_lambda(1e-2)];
        let sel = select_lambda(&model, &s, &[(Target::Graph(&g), truth.clone())], &grid, |e, t| {
            top_k_acc(&rank_units(e, 1), t, 1)
        })
        .unwrap();
        assert_eq!(sel.metric, 1.0);
        let single = select_lambda(&model, &s, &[(Target::Graph(&g), truth)], &grid[..1], |e, t| {
            top_k_acc(&rank_units(e, 1), t, 1)
        })
        .unwrap();
        assert_eq!(single.config, grid[0]);
        assert_eq!(sel.config, grid[0]);
        assert_eq!(sel.positive_units, single.positive_units);
        assert!(select_lambda(&model, &s, &[], &grid, |_, _| 0.0).is_err());
    }

    #[test]
    fn random_scores_are_positive_and_seeded() {
        let units: Vec<UnitId> = (0..5).map(UnitId::Node).collect();
        let a = random_explanation(&units, 3);
        assert_eq!(a, random_explanation(&units, 3));
        assert!(a.scores.iter().all(|&s| s > 0.0));
    }
}
