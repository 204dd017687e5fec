//! Auxiliary dataset generation: perturb the target M-1 times, query the
//! model on every copy, and record per-unit features for kernel estimation.
//!
//! Sample 0 is always the unperturbed target.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphSeries, OwnedTarget, Target, UnitId, UnitKind};
use crate::model::{predict, BlackBoxModel, PredictionVector};

pub const DEFAULT_M_SAMPLES: usize = 201;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    /// Remove `k` uniformly chosen nodes (node-time pairs on a series).
    RemoveNodes { k: usize },
    /// Remove `k` uniformly chosen edges.
    RemoveEdges { k: usize },
    /// Add Gaussian noise to the features of a random `node_fraction` of nodes.
    FeatureNoise { node_fraction: f64, noise_std: f64 },
    /// Remove every node of one random walk.
    WalkRemoveNodes { walk_len: usize },
    /// Add Gaussian noise to every node of one random walk.
    WalkFeatureNoise { walk_len: usize, noise_std: f64 },
}

impl PerturbationKind {
    pub fn is_removal(&self) -> bool {
        matches!(
            self,
            PerturbationKind::RemoveNodes { .. }
                | PerturbationKind::RemoveEdges { .. }
                | PerturbationKind::WalkRemoveNodes { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        match *self {
            PerturbationKind::RemoveNodes { k } | PerturbationKind::RemoveEdges { k } if k < 1 => {
                bad("removal count must be at least 1".into())
            }
            PerturbationKind::FeatureNoise { node_fraction, .. }
                if !(node_fraction > 0.0 && node_fraction <= 1.0) =>
            {
                bad(format!("node fraction {node_fraction} must lie in (0, 1]"))
            }
            PerturbationKind::FeatureNoise { noise_std, .. } | PerturbationKind::WalkFeatureNoise { noise_std, .. }
                if !(noise_std > 0.0 && noise_std.is_finite()) =>
            {
                bad(format!("noise std {noise_std} must be positive"))
            }
            PerturbationKind::WalkRemoveNodes { walk_len } | PerturbationKind::WalkFeatureNoise { walk_len, .. }
                if walk_len < 1 =>
            {
                bad("walk length must be at least 1".into())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PerturbationKind::RemoveNodes { k } => write!(f, "remove-nodes:{k}"),
            PerturbationKind::RemoveEdges { k } => write!(f, "remove-edges:{k}"),
            PerturbationKind::FeatureNoise {
                node_fraction,
                noise_std,
            } => write!(f, "feature-noise:{node_fraction},{noise_std}"),
            PerturbationKind::WalkRemoveNodes { walk_len } => write!(f, "walk-remove-nodes:{walk_len}"),
            PerturbationKind::WalkFeatureNoise { walk_len, noise_std } => {
                write!(f, "walk-feature-noise:{walk_len},{noise_std}")
            }
        }
    }
}

/// Parses presets such as `remove-nodes:2` or `walk-feature-noise:3,0.5`.
impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse perturbation preset `{s}`"));
        let (name, args) = s.split_once(':').ok_or_else(bad)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let int = |i: usize| args.get(i).and_then(|a| a.parse::<usize>().ok()).ok_or_else(bad);
        let real = |i: usize| args.get(i).and_then(|a| a.parse::<f64>().ok()).ok_or_else(bad);
        let kind = match (name, args.len()) {
            ("remove-nodes", 1) => PerturbationKind::RemoveNodes { k: int(0)? },
            ("remove-edges", 1) => PerturbationKind::RemoveEdges { k: int(0)? },
            ("feature-noise", 2) => PerturbationKind::FeatureNoise {
                node_fraction: real(0)?,
                noise_std: real(1)?,
            },
            ("walk-remove-nodes", 1) => PerturbationKind::WalkRemoveNodes { walk_len: int(0)? },
            ("walk-feature-noise", 2) => PerturbationKind::WalkFeatureNoise {
                walk_len: int(0)?,
                noise_std: real(1)?,
            },
            _ => return Err(bad()),
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// How noise schemes treat node features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// Real-valued features, perturbed additively.
    #[default]
    Continuous,
    /// One-hot features; perturbation resamples the category uniformly.
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationScheme {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    #[serde(default = "default_m")]
    pub m_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub feature_mode: FeatureMode,
}

fn default_m() -> usize {
    DEFAULT_M_SAMPLES
}

impl PerturbationScheme {
    pub fn new(kind: PerturbationKind, m_samples: usize, seed: u64) -> Self {
        Self {
            kind,
            m_samples,
            seed,
            feature_mode: FeatureMode::Continuous,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.m_samples < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 samples, got {}",
                self.m_samples
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Binary,
    Continuous,
    Categorical,
}

/// One unit's feature across the M samples.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitFeatures {
    pub kind: FeatureKind,
    /// `samples[i]` is the unit's feature vector in sample `i`.
    pub samples: Vec<Vec<f64>>,
}

impl UnitFeatures {
    /// True when the feature changes somewhere across the samples.
    pub fn varies(&self) -> bool {
        self.samples.iter().any(|s| s != &self.samples[0])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Units touched by the perturbation (removed or noised); empty for sample 0.
    pub touched: Vec<UnitId>,
    pub prediction: PredictionVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuxiliaryDataset {
    pub units: Vec<UnitId>,
    /// Parallel to `units`.
    pub unit_features: Vec<UnitFeatures>,
    pub samples: Vec<Sample>,
}

impl AuxiliaryDataset {
    pub fn m(&self) -> usize {
        self.samples.len()
    }
}

/// Per-sample perturbation, before model evaluation.
struct Perturbed {
    target: OwnedTarget,
    touched: Vec<UnitId>,
    /// Feature row for every unit.
    rows: Vec<Vec<f64>>,
}

/// Builds the auxiliary dataset for `units` of `target`.
pub fn generate<M: BlackBoxModel + ?Sized>(
    target: Target<'_>,
    model: &M,
    scheme: &PerturbationScheme,
    unit_kind: UnitKind,
) -> Result<AuxiliaryDataset> {
    scheme.validate()?;
    let units = target.units(unit_kind)?;
    let feature_kind = check_compatible(target, scheme, unit_kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);

    let original = Perturbed {
        target: owned(target),
        touched: Vec::new(),
        rows: original_rows(target, &units, feature_kind, scheme.feature_mode),
    };
    let mut perturbed = Vec::with_capacity(scheme.m_samples);
    perturbed.push(original);
    for _ in 1..scheme.m_samples {
        perturbed.push(perturb_once(target, scheme, &units, feature_kind, &mut rng)?);
    }

    let predictions = perturbed
        .par_iter()
        .map(|p| predict(model, p.target.as_target()))
        .collect::<std::result::Result<Vec<_>, _>>()?;

    let unit_features: Vec<UnitFeatures> = (0..units.len())
        .map(|u| UnitFeatures {
            kind: feature_kind,
            samples: perturbed.iter().map(|p| p.rows[u].clone()).collect(),
        })
        .collect();
    if !unit_features.iter().any(UnitFeatures::varies) {
        log::warn!("perturbation scheme {} left every unit unchanged", scheme.kind);
    }
    let samples = perturbed
        .into_iter()
        .zip(predictions)
        .map(|(p, prediction)| Sample {
            touched: p.touched,
            prediction,
        })
        .collect();
    Ok(AuxiliaryDataset {
        units,
        unit_features,
        samples,
    })
}

fn owned(target: Target<'_>) -> OwnedTarget {
    match target {
        Target::Graph(g) => OwnedTarget::Graph(g.clone()),
        Target::Series(s) => OwnedTarget::Series(s.clone()),
    }
}

fn check_compatible(target: Target<'_>, scheme: &PerturbationScheme, unit_kind: UnitKind) -> Result<FeatureKind> {
    use PerturbationKind::*;
    let incompatible = || {
        Err(Error::Incompatible(format!(
            "scheme {} cannot score {} units of a {} target",
            scheme.kind,
            unit_kind.name(),
            target.kind_name()
        )))
    };
    let is_series = matches!(target, Target::Series(_));
    match (scheme.kind, unit_kind) {
        (RemoveNodes { .. } | WalkRemoveNodes { .. }, UnitKind::Node | UnitKind::Edge) if !is_series => {
            Ok(FeatureKind::Binary)
        }
        (RemoveNodes { .. } | WalkRemoveNodes { .. }, UnitKind::NodeTime) if is_series => Ok(FeatureKind::Binary),
        (RemoveEdges { .. }, UnitKind::Edge) if !is_series => Ok(FeatureKind::Binary),
        (FeatureNoise { .. } | WalkFeatureNoise { .. }, UnitKind::Node | UnitKind::NodeTime) => {
            let dim = match target {
                Target::Graph(g) => g.feature_dim(),
                Target::Series(s) => s.snapshots().iter().map(Graph::feature_dim).min().unwrap_or(0),
            };
            if dim == 0 {
                return Err(Error::Incompatible(
                    "noise perturbation needs node features (feature dimension is 0)".into(),
                ));
            }
            Ok(match scheme.feature_mode {
                FeatureMode::Continuous => FeatureKind::Continuous,
                FeatureMode::Categorical => FeatureKind::Categorical,
            })
        }
        _ => incompatible(),
    }
}

fn category(row: &[f64]) -> f64 {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best as f64
}

fn node_row(row: &[f64], mode: FeatureMode) -> Vec<f64> {
    match mode {
        FeatureMode::Continuous => row.to_vec(),
        FeatureMode::Categorical => vec![category(row)],
    }
}

fn original_rows(target: Target<'_>, units: &[UnitId], kind: FeatureKind, mode: FeatureMode) -> Vec<Vec<f64>> {
    units
        .iter()
        .map(|u| match (kind, u, target) {
            (FeatureKind::Binary, _, _) => vec![1.0],
            (_, UnitId::Node(v), Target::Graph(g)) => node_row(g.feature(*v), mode),
            (_, UnitId::NodeTime { node, time }, Target::Series(s)) => {
                node_row(s.snapshots()[*time].feature(*node), mode)
            }
            _ => unreachable!("compatibility checked"),
        })
        .collect()
}

/// Pool of (time, node) pairs eligible for perturbation.
fn node_pool(target: Target<'_>) -> Vec<(usize, usize)> {
    match target {
        Target::Graph(g) => (0..g.num_nodes()).map(|v| (0, v)).collect(),
        Target::Series(s) => s
            .snapshots()
            .iter()
            .enumerate()
            .flat_map(|(t, g)| (0..g.num_nodes()).map(move |v| (t, v)))
            .collect(),
    }
}

fn snapshot<'a>(target: Target<'a>, t: usize) -> &'a Graph {
    match target {
        Target::Graph(g) => g,
        Target::Series(s) => &s.snapshots()[t],
    }
}

fn touched_id(target: Target<'_>, t: usize, v: usize) -> UnitId {
    match target {
        Target::Graph(_) => UnitId::Node(v),
        Target::Series(_) => UnitId::NodeTime { node: v, time: t },
    }
}

/// Draws a random walk in a uniformly chosen snapshot from a uniform start.
fn draw_walk(target: Target<'_>, walk_len: usize, rng: &mut ChaCha8Rng) -> Result<(usize, Vec<usize>)> {
    let t = match target {
        Target::Graph(_) => 0,
        Target::Series(s) => rng.random_range(0..s.len()),
    };
    let g = snapshot(target, t);
    if g.num_nodes() == 0 {
        return Err(Error::InvalidArgument("cannot walk on an empty graph".into()));
    }
    let start = rng.random_range(0..g.num_nodes());
    let mut nodes = Vec::new();
    for v in g.random_walk(start, walk_len, rng) {
        if !nodes.contains(&v) {
            nodes.push(v);
        }
    }
    Ok((t, nodes))
}

fn perturb_once(
    target: Target<'_>,
    scheme: &PerturbationScheme,
    units: &[UnitId],
    kind: FeatureKind,
    rng: &mut ChaCha8Rng,
) -> Result<Perturbed> {
    match scheme.kind {
        PerturbationKind::RemoveNodes { k } => {
            let pool = node_pool(target);
            if k >= pool.len() {
                return Err(Error::InvalidArgument(format!(
                    "cannot remove {k} of {} nodes",
                    pool.len()
                )));
            }
            // reject draws that would empty a snapshot
            for _ in 0..1000 {
                let picked: Vec<(usize, usize)> = sample_indices(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
                if let Some(p) = remove_node_pairs(target, &picked, units)? {
                    return Ok(p);
                }
            }
            Err(Error::InvalidArgument(format!("removing {k} nodes keeps emptying a snapshot")))
        }
        PerturbationKind::WalkRemoveNodes { walk_len } => {
            let (t, mut nodes) = draw_walk(target, walk_len, rng)?;
            let n = snapshot(target, t).num_nodes();
            if nodes.len() >= n {
                nodes.truncate(n - 1);
            }
            let picked: Vec<_> = nodes.into_iter().map(|v| (t, v)).collect();
            Ok(remove_node_pairs(target, &picked, units)?.expect("walk removal leaves a node"))
        }
        PerturbationKind::RemoveEdges { k } => {
            let g = match target {
                Target::Graph(g) => g,
                Target::Series(_) => unreachable!("compatibility checked"),
            };
            if k > g.num_edges() {
                return Err(Error::InvalidArgument(format!(
                    "cannot remove {k} of {} edges",
                    g.num_edges()
                )));
            }
            let victims: BTreeSet<(usize, usize)> = sample_indices(rng, g.num_edges(), k)
                .into_iter()
                .map(|i| g.edges()[i])
                .collect();
            let perturbed = g.remove_edges(&victims)?;
            let rows = units
                .iter()
                .map(|u| match u {
                    UnitId::Edge(a, b) => vec![if victims.contains(&(*a, *b)) { 0.0 } else { 1.0 }],
                    _ => unreachable!("compatibility checked"),
                })
                .collect();
            Ok(Perturbed {
                target: OwnedTarget::Graph(perturbed),
                touched: victims.iter().map(|&(a, b)| UnitId::Edge(a, b)).collect(),
                rows,
            })
        }
        PerturbationKind::FeatureNoise {
            node_fraction,
            noise_std,
        } => {
            let pool = node_pool(target);
            let count = ((node_fraction * pool.len() as f64).ceil() as usize).clamp(1, pool.len());
            let picked: Vec<_> = sample_indices(rng, pool.len(), count).into_iter().map(|i| pool[i]).collect();
            Ok(add_noise(target, &picked, noise_std, scheme.feature_mode, units, kind, rng))
        }
        PerturbationKind::WalkFeatureNoise { walk_len, noise_std } => {
            let (t, nodes) = draw_walk(target, walk_len, rng)?;
            let picked: Vec<_> = nodes.into_iter().map(|v| (t, v)).collect();
            Ok(add_noise(target, &picked, noise_std, scheme.feature_mode, units, kind, rng))
        }
    }
}

/// Removes (time, node) pairs. `None` when a snapshot would become empty.
fn remove_node_pairs(target: Target<'_>, picked: &[(usize, usize)], units: &[UnitId]) -> Result<Option<Perturbed>> {
    let touched = picked.iter().map(|&(t, v)| touched_id(target, t, v)).collect();
    match target {
        Target::Graph(g) => {
            let victims: BTreeSet<usize> = picked.iter().map(|&(_, v)| v).collect();
            if victims.len() >= g.num_nodes() {
                return Ok(None);
            }
            let removed = g.remove_nodes(&victims)?;
            let alive = |v: usize| !victims.contains(&v);
            let rows = units
                .iter()
                .map(|u| {
                    let survives = match *u {
                        UnitId::Node(v) => alive(v),
                        UnitId::Edge(a, b) => alive(a) && alive(b),
                        UnitId::NodeTime { .. } => unreachable!("compatibility checked"),
                    };
                    vec![if survives { 1.0 } else { 0.0 }]
                })
                .collect();
            Ok(Some(Perturbed {
                target: OwnedTarget::Graph(removed.graph),
                touched,
                rows,
            }))
        }
        Target::Series(s) => {
            let mut per_time: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); s.len()];
            for &(t, v) in picked {
                per_time[t].insert(v);
            }
            let mut snapshots = Vec::with_capacity(s.len());
            for (g, victims) in s.snapshots().iter().zip(&per_time) {
                if victims.len() >= g.num_nodes() && g.num_nodes() > 0 {
                    return Ok(None);
                }
                snapshots.push(g.remove_nodes(victims)?.graph);
            }
            let rows = units
                .iter()
                .map(|u| match *u {
                    UnitId::NodeTime { node, time } => {
                        vec![if per_time[time].contains(&node) { 0.0 } else { 1.0 }]
                    }
                    _ => unreachable!("compatibility checked"),
                })
                .collect();
            Ok(Some(Perturbed {
                target: OwnedTarget::Series(GraphSeries::new(snapshots)?),
                touched,
                rows,
            }))
        }
    }
}

fn add_noise(
    target: Target<'_>,
    picked: &[(usize, usize)],
    noise_std: f64,
    mode: FeatureMode,
    units: &[UnitId],
    kind: FeatureKind,
    rng: &mut ChaCha8Rng,
) -> Perturbed {
    let normal = Normal::new(0.0, noise_std).expect("validated noise std");
    let mut owned = owned(target);
    {
        let mut jitter = |g: &mut Graph, v: usize| {
            let row = g.feature_mut(v);
            match mode {
                FeatureMode::Continuous => {
                    for x in row.iter_mut() {
                        *x += normal.sample(rng);
                    }
                }
                FeatureMode::Categorical => {
                    let c = rng.random_range(0..row.len());
                    for (i, x) in row.iter_mut().enumerate() {
                        *x = if i == c { 1.0 } else { 0.0 };
                    }
                }
            }
        };
        match &mut owned {
            OwnedTarget::Graph(g) => {
                for &(_, v) in picked {
                    jitter(g, v);
                }
            }
            OwnedTarget::Series(s) => {
                for &(t, v) in picked {
                    jitter(&mut s.snapshots_mut()[t], v);
                }
            }
        }
    }
    let rows = original_rows(owned.as_target(), units, kind, mode);
    Perturbed {
        touched: picked.iter().map(|&(t, v)| touched_id(target, t, v)).collect(),
        target: owned,
        rows,
    }
}

/// Overlapping groups drawn from random walks, for the group solver.
///
/// Each group is the set of distinct nodes (or traversed edges) of one walk
/// from a uniform start. Whole sets of `n_walks` walks are redrawn until they
/// cover every unit, at most `100 * n_walks` times; units still uncovered by
/// the best draw become singleton groups.
pub fn walk_groups(g: &Graph, kind: UnitKind, n_walks: usize, walk_len: usize, seed: u64) -> Result<Vec<Vec<UnitId>>> {
    if n_walks < 1 {
        return Err(Error::InvalidArgument("need at least one walk".into()));
    }
    if walk_len < 1 {
        return Err(Error::InvalidArgument("walk length must be at least 1".into()));
    }
    let universe = Target::Graph(g).units(kind)?;
    if universe.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, Vec<Vec<UnitId>>)> = None;
    for _ in 0..(100 * n_walks).max(1) {
        let mut groups = Vec::with_capacity(n_walks);
        for _ in 0..n_walks {
            let start = rng.random_range(0..g.num_nodes());
            let walk = g.random_walk(start, walk_len, &mut rng);
            let group: BTreeSet<UnitId> = match kind {
                UnitKind::Node => walk.iter().map(|&v| UnitId::Node(v)).collect(),
                UnitKind::Edge => walk.windows(2).map(|w| UnitId::edge(w[0], w[1])).collect(),
                UnitKind::NodeTime => unreachable!("rejected by units()"),
            };
            if !group.is_empty() {
                groups.push(group.into_iter().collect::<Vec<_>>());
            }
        }
        let covered: BTreeSet<UnitId> = groups.iter().flatten().copied().collect();
        let missing = universe.len() - covered.len();
        if best.as_ref().is_none_or(|(m, _)| missing < *m) {
            best = Some((missing, groups));
        }
        if missing == 0 {
            break;
        }
    }
    let (missing, mut groups) = best.expect("at least one attempt");
    if missing > 0 {
        let covered: BTreeSet<UnitId> = groups.iter().flatten().copied().collect();
        log::warn!("{missing} units not covered by walks; adding singleton groups");
        groups.extend(universe.into_iter().filter(|u| !covered.contains(u)).map(|u| vec![u]));
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmarks::generators::{cycle, gen_disconnected_cycles, gen_grid_pattern, wheel, GridPattern};
    use crate::model::{HubOracle, PatternOracle};

    /// Constant classifier that accepts anything of the given kind.
    struct Constant;

    impl BlackBoxModel for Constant {
        fn n_classes(&self) -> usize {
            2
        }
        fn accepts(&self) -> crate::model::InputKind {
            crate::model::InputKind::Graph
        }
        fn evaluate(&self, _: Target<'_>) -> std::result::Result<Vec<f64>, crate::error::ModelError> {
            Ok(vec![0.5, 0.5])
        }
    }

    #[test]
    fn remove_nodes_on_cycle() {
        let g = cycle(5);
        let scheme = PerturbationScheme::new(PerturbationKind::RemoveNodes { k: 2 }, 3, 1);
        let d = generate(Target::Graph(&g), &Constant, &scheme, UnitKind::Node).unwrap();
        assert_eq!(d.m(), 3);
        assert!(d.unit_features.iter().all(|f| f.samples[0] == vec![1.0]));
        for i in 1..3 {
            let zeros = d.unit_features.iter().filter(|f| f.samples[i][0] == 0.0).count();
            assert_eq!(zeros, 2);
            assert_eq!(d.samples[i].touched.len(), 2);
        }
        assert!(d.samples[0].touched.is_empty());
    }

    #[test]
    fn walk_removal_stays_in_one_component() {
        let (g, _) = gen_disconnected_cycles(5, 6);
        let labels = g.connected_components();
        let scheme = PerturbationScheme::new(PerturbationKind::WalkRemoveNodes { walk_len: 4 }, 60, 9);
        let d = generate(Target::Graph(&g), &Constant, &scheme, UnitKind::Node).unwrap();
        for s in &d.samples[1..] {
            let comps: BTreeSet<usize> = s
                .touched
                .iter()
                .map(|u| match u {
                    UnitId::Node(v) => labels[*v],
                    _ => unreachable!(),
                })
                .collect();
            assert_eq!(comps.len(), 1);
        }
    }

    #[test]
    fn feature_noise_keeps_sample_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (g, _) = gen_grid_pattern(GridPattern::Rectangle, &mut rng);
        let model = PatternOracle::new(4, 0.05).unwrap();
        let scheme = PerturbationScheme::new(
            PerturbationKind::FeatureNoise {
                node_fraction: 1.0,
                noise_std: 0.1,
            },
            5,
            3,
        );
        let d = generate(Target::Graph(&g), &model, &scheme, UnitKind::Node).unwrap();
        for (u, f) in d.units.iter().zip(&d.unit_features) {
            let UnitId::Node(v) = *u else { unreachable!() };
            assert_eq!(f.kind, FeatureKind::Continuous);
            assert_eq!(f.samples[0], g.feature(v).to_vec());
            for i in 1..5 {
                assert_ne!(f.samples[i], f.samples[0]);
            }
        }
    }

    #[test]
    fn edge_existence_under_node_removal() {
        let g = wheel(7);
        let scheme = PerturbationScheme::new(PerturbationKind::RemoveNodes { k: 1 }, 20, 4);
        let d = generate(Target::Graph(&g), &HubOracle::default(), &scheme, UnitKind::Edge).unwrap();
        for i in 1..20 {
            let UnitId::Node(gone) = d.samples[i].touched[0] else { unreachable!() };
            for (u, f) in d.units.iter().zip(&d.unit_features) {
                let UnitId::Edge(a, b) = *u else { unreachable!() };
                let expected = if a == gone || b == gone { 0.0 } else { 1.0 };
                assert_eq!(f.samples[i][0], expected);
            }
        }
    }

    #[test]
    fn incompatible_pairings() {
        let g = cycle(5);
        let scheme = PerturbationScheme::new(PerturbationKind::RemoveEdges { k: 1 }, 5, 0);
        assert!(matches!(
            generate(Target::Graph(&g), &Constant, &scheme, UnitKind::Node),
            Err(Error::Incompatible(_))
        ));
        let noise = PerturbationScheme::new(
            PerturbationKind::FeatureNoise {
                node_fraction: 0.5,
                noise_std: 1.0,
            },
            5,
            0,
        );
        // no features to perturb
        assert!(matches!(
            generate(Target::Graph(&g), &Constant, &noise, UnitKind::Node),
            Err(Error::Incompatible(_))
        ));
        assert!(matches!(
            generate(Target::Graph(&g), &Constant, &scheme, UnitKind::NodeTime),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn generation_is_deterministic() {
        let g = wheel(9);
        let scheme = PerturbationScheme::new(PerturbationKind::RemoveNodes { k: 2 }, 50, 17);
        let a = generate(Target::Graph(&g), &HubOracle::default(), &scheme, UnitKind::Node).unwrap();
        let b = generate(Target::Graph(&g), &HubOracle::default(), &scheme, UnitKind::Node).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn presets_parse() {
        assert_eq!(
            "remove-nodes:2".parse::<PerturbationKind>().unwrap(),
            PerturbationKind::RemoveNodes { k: 2 }
        );
        assert_eq!(
            "walk-feature-noise:3,0.5".parse::<PerturbationKind>().unwrap(),
            PerturbationKind::WalkFeatureNoise {
                walk_len: 3,
                noise_std: 0.5
            }
        );
        assert!("remove-nodes:0".parse::<PerturbationKind>().is_err());
        assert!("feature-noise:1.5,0.1".parse::<PerturbationKind>().is_err());
        assert!("shuffle:1".parse::<PerturbationKind>().is_err());
        let k = PerturbationKind::FeatureNoise {
            node_fraction: 0.25,
            noise_std: 0.5,
        };
        assert_eq!(k.to_string().parse::<PerturbationKind>().unwrap(), k);
    }

    #[test]
    fn scheme_json_form() {
        let s: PerturbationScheme = serde_json::from_str(r#"{"kind":"remove_nodes","k":2,"m_samples":11}"#).unwrap();
        assert_eq!(s.kind, PerturbationKind::RemoveNodes { k: 2 });
        assert_eq!(s.m_samples, 11);
        assert_eq!(s.seed, 0);
    }

    #[test]
    fn walk_groups_on_single_edge() {
        let g = Graph::structure(2, [(0, 1)]).unwrap();
        let groups = walk_groups(&g, UnitKind::Node, 1, 3, 0).unwrap();
        assert_eq!(groups, vec![vec![UnitId::Node(0), UnitId::Node(1)]]);
    }

    #[test]
    fn walk_groups_cover_every_node() {
        let g = wheel(12);
        for seed in 0..1000 {
            let groups = walk_groups(&g, UnitKind::Node, 4, 2, seed).unwrap();
            let covered: BTreeSet<UnitId> = groups.iter().flatten().copied().collect();
            assert_eq!(covered.len(), 12, "seed {seed}");
            assert!(groups.iter().all(|grp| !grp.is_empty()));
        }
    }

    #[test]
    fn walk_groups_fall_back_to_singletons() {
        // isolated nodes can never be reached by a walk from elsewhere
        let g = Graph::structure(5, [(0, 1)]).unwrap();
        let groups = walk_groups(&g, UnitKind::Node, 1, 1, 3).unwrap();
        let covered: BTreeSet<UnitId> = groups.iter().flatten().copied().collect();
        assert_eq!(covered.len(), 5);
    }

    #[test]
    fn edge_walk_groups_cover_edges() {
        let g = cycle(6);
        let groups = walk_groups(&g, UnitKind::Edge, 6, 2, 5).unwrap();
        let covered: BTreeSet<UnitId> = groups.iter().flatten().copied().collect();
        assert_eq!(covered.len(), 6);
    }
}
