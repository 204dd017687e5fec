//! Exact rule classifiers used in place of trained GNNs.
//!
//! Each oracle is binary: `[1 - p, p]` where `p = 1 - epsilon` when the graph
//! predicate holds and `epsilon` otherwise. All predicates are invariant under
//! node relabeling.

use std::collections::HashSet;

use crate::error::{Error, ModelError, Result};
use crate::graph::{Graph, Target};
use crate::model::{BlackBoxModel, InputKind};

pub const DEFAULT_EPSILON: f64 = 0.05;

/// Feature threshold above which a node counts as "on".
pub const FEATURE_THRESHOLD: f64 = 0.5;

fn check_epsilon(epsilon: f64) -> Result<f64> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(epsilon)
    } else {
        Err(Error::InvalidArgument(format!("smoothing {epsilon} must lie in (0, 0.5)")))
    }
}

fn binary(positive: bool, epsilon: f64) -> Vec<f64> {
    let p = if positive { 1.0 - epsilon } else { epsilon };
    vec![1.0 - p, p]
}

fn expect_graph<'a>(input: Target<'a>) -> std::result::Result<&'a Graph, ModelError> {
    match input {
        Target::Graph(g) => Ok(g),
        Target::Series(_) => Err(ModelError::InputKind {
            expected: "graph",
            actual: "series",
        }),
    }
}

/// True when some node is adjacent to every other node of its local
/// component and that component has at least four nodes.
///
/// The local component of `v` is its component after deleting cut edges that
/// are not incident to `v`, so a wheel still has a hub when it is joined to
/// another graph by a single bridge.
pub fn has_hub(g: &Graph) -> bool {
    hub_components(g) > 0
}

/// Number of distinct local components (see [`has_hub`]) that contain a hub.
pub fn hub_components(g: &Graph) -> usize {
    let bridges: HashSet<(usize, usize)> = g.bridges().into_iter().collect();
    let mut seen: HashSet<usize> = HashSet::new();
    for v in (0..g.num_nodes()).filter(|&v| g.degree(v) >= 3) {
        let labels = g.components_filtered(|a, b| {
            a == v || b == v || !bridges.contains(&crate::graph::canonical_edge(a, b))
        });
        let members: Vec<usize> = (0..g.num_nodes()).filter(|&u| labels[u] == labels[v]).collect();
        if members.len() >= 4 && members.len() == g.degree(v) + 1 {
            seen.insert(members[0]);
        }
    }
    seen.len()
}

/// True when the graph is connected and has at least one cut edge.
pub fn has_connecting_bridge(g: &Graph) -> bool {
    g.num_nodes() >= 2 && g.is_connected() && !g.bridges().is_empty()
}

/// Number of nodes whose first feature exceeds [`FEATURE_THRESHOLD`].
pub fn count_active(g: &Graph) -> usize {
    if g.feature_dim() == 0 {
        return 0;
    }
    (0..g.num_nodes())
        .filter(|&v| g.feature(v)[0] > FEATURE_THRESHOLD)
        .count()
}

/// Size of the largest connected set of active nodes.
pub fn largest_active_chunk(g: &Graph) -> usize {
    if g.feature_dim() == 0 {
        return 0;
    }
    let active: Vec<bool> = (0..g.num_nodes())
        .map(|v| g.feature(v)[0] > FEATURE_THRESHOLD)
        .collect();
    let labels = g.components_filtered(|a, b| active[a] && active[b]);
    let mut sizes = vec![0usize; g.num_nodes()];
    for v in 0..g.num_nodes() {
        if active[v] {
            sizes[labels[v]] += 1;
        }
    }
    sizes.into_iter().max().unwrap_or(0)
}

/// Positive iff the graph contains a hub node (see [`has_hub`]).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HubOracle {
    epsilon: f64,
    rule: HubRule,
}

/// How [`HubOracle`] turns hubs into a probability.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum HubRule {
    /// `1 - ε` if any hub is present, else `ε`.
    #[default]
    Any,
    /// `ε`, [`ONE_HUB_PROB`], or `1 - ε` for zero, one, or at least two hub
    /// components. Still positive with one hub, but losing either of two hubs
    /// moves the output, as it does for a mean-pooled GNN.
    Graded,
}

/// Positive-class probability of [`HubRule::Graded`] with exactly one hub.
pub const ONE_HUB_PROB: f64 = 0.75;

impl HubOracle {
    pub fn new(epsilon: f64) -> Result<Self> {
        Ok(Self {
            epsilon: check_epsilon(epsilon)?,
            rule: HubRule::Any,
        })
    }

    pub fn with_rule(self, rule: HubRule) -> Self {
        Self { rule, ..self }
    }

    pub fn rule(&self) -> HubRule {
        self.rule
    }
}

impl Default for HubOracle {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            rule: HubRule::Any,
        }
    }
}

impl BlackBoxModel for HubOracle {
    fn n_classes(&self) -> usize {
        2
    }

    fn accepts(&self) -> InputKind {
        InputKind::Graph
    }

    fn evaluate(&self, input: Target<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        let g = expect_graph(input)?;
        match self.rule {
            HubRule::Any => Ok(binary(has_hub(g), self.epsilon)),
            HubRule::Graded => {
                let p = match hub_components(g) {
                    0 => self.epsilon,
                    1 => ONE_HUB_PROB,
                    _ => 1.0 - self.epsilon,
                };
                Ok(vec![1.0 - p, p])
            }
        }
    }
}

/// Which graph predicate [`BridgeOracle`] tests.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BridgeRule {
    /// Connected and contains a cut edge.
    #[default]
    CutEdge,
    /// Some node has degree at least 3. On cycles versus cycles joined by a
    /// bridge this is the local motif a shallow max-pooled GNN picks up; unlike
    /// `CutEdge` it does not collapse to "negative" once a few edges are cut.
    Junction,
}

/// Positive iff the graph satisfies its [`BridgeRule`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BridgeOracle {
    epsilon: f64,
    rule: BridgeRule,
}

impl BridgeOracle {
    pub fn new(epsilon: f64) -> Result<Self> {
        Ok(Self {
            epsilon: check_epsilon(epsilon)?,
            rule: BridgeRule::CutEdge,
        })
    }

    pub fn with_rule(self, rule: BridgeRule) -> Self {
        Self { rule, ..self }
    }

    pub fn rule(&self) -> BridgeRule {
        self.rule
    }
}

impl Default for BridgeOracle {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            rule: BridgeRule::CutEdge,
        }
    }
}

/// True if some node has degree at least 3.
pub fn has_junction(g: &Graph) -> bool {
    (0..g.num_nodes()).any(|v| g.degree(v) >= 3)
}

impl BlackBoxModel for BridgeOracle {
    fn n_classes(&self) -> usize {
        2
    }

    fn accepts(&self) -> InputKind {
        InputKind::Graph
    }

    fn evaluate(&self, input: Target<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        let g = expect_graph(input)?;
        let positive = match self.rule {
            BridgeRule::CutEdge => has_connecting_bridge(g),
            BridgeRule::Junction => has_junction(g),
        };
        Ok(binary(positive, self.epsilon))
    }
}

/// Positive iff at least `target_count` nodes are active.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternOracle {
    target_count: usize,
    epsilon: f64,
}

impl PatternOracle {
    pub fn new(target_count: usize, epsilon: f64) -> Result<Self> {
        Ok(Self {
            target_count,
            epsilon: check_epsilon(epsilon)?,
        })
    }
}

impl BlackBoxModel for PatternOracle {
    fn n_classes(&self) -> usize {
        2
    }

    fn accepts(&self) -> InputKind {
        InputKind::Graph
    }

    fn evaluate(&self, input: Target<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        let g = expect_graph(input)?;
        Ok(binary(count_active(g) >= self.target_count, self.epsilon))
    }
}

/// Positive iff some snapshot holds a connected set of at least three active
/// nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesChunkOracle {
    epsilon: f64,
}

impl SeriesChunkOracle {
    pub const MIN_CHUNK: usize = 3;

    pub fn new(epsilon: f64) -> Result<Self> {
        Ok(Self {
            epsilon: check_epsilon(epsilon)?,
        })
    }
}

impl Default for SeriesChunkOracle {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl BlackBoxModel for SeriesChunkOracle {
    fn n_classes(&self) -> usize {
        2
    }

    fn accepts(&self) -> InputKind {
        InputKind::Series
    }

    fn evaluate(&self, input: Target<'_>) -> std::result::Result<Vec<f64>, ModelError> {
        let series = match input {
            Target::Series(s) => s,
            Target::Graph(_) => {
                return Err(ModelError::InputKind {
                    expected: "series",
                    actual: "graph",
                })
            }
        };
        let positive = series
            .snapshots()
            .iter()
            .any(|g| largest_active_chunk(g) >= Self::MIN_CHUNK);
        Ok(binary(positive, self.epsilon))
    }
}
