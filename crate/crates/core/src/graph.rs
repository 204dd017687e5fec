//! Undirected attributed graphs, graph series and the unit identifiers that
//! explanations are expressed in.
//!
//! Graphs are simple (no self-loops, no parallel edges) and always dense:
//! nodes are `0..num_nodes`. Removing nodes relabels the survivors and hands
//! back the map from new to old indices.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

/// Canonical (smaller index first) form of an undirected edge.
#[inline]
pub fn canonical_edge(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    /// Sorted, canonical, unique.
    edges: Vec<(usize, usize)>,
    feature_dim: usize,
    /// Row-major `num_nodes x feature_dim`.
    features: Vec<f64>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph, canonicalizing edge order. Rejects dangling indices,
    /// self-loops, duplicates, ragged or non-finite features.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if features.len() != num_nodes {
            return Err(Error::InvalidGraph(format!(
                "{} feature rows for {} nodes",
                features.len(),
                num_nodes
            )));
        }
        let feature_dim = features.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(num_nodes * feature_dim);
        for (v, row) in features.iter().enumerate() {
            if row.len() != feature_dim {
                return Err(Error::InvalidGraph(format!(
                    "feature row {v} has length {}, expected {feature_dim}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "feature row {v} contains a non-finite value"
                )));
            }
            flat.extend_from_slice(row);
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a},{b}) references a node >= {num_nodes}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if !set.insert(canonical_edge(a, b)) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({a},{b})")));
            }
        }
        Ok(Self::from_parts(
            num_nodes,
            set.into_iter().collect(),
            feature_dim,
            flat,
        ))
    }

    /// Structure-only graph (feature dimension 0).
    pub fn structure(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(num_nodes, edges, vec![Vec::new(); num_nodes])
    }

    fn from_parts(
        num_nodes: usize,
        edges: Vec<(usize, usize)>,
        feature_dim: usize,
        features: Vec<f64>,
    ) -> Self {
        let mut adjacency = vec![Vec::new(); num_nodes];
        for &(a, b) in &edges {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Self {
            num_nodes,
            edges,
            feature_dim,
            features,
            adjacency,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature(&self, v: usize) -> &[f64] {
        &self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    pub fn feature_mut(&mut self, v: usize) -> &mut [f64] {
        &mut self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&canonical_edge(a, b)).is_ok()
    }

    /// Index of `(a, b)` in [`Graph::edges`].
    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.edges.binary_search(&canonical_edge(a, b)).ok()
    }

    /// Removes `victims` and every incident edge. The returned map sends each
    /// new node index to its index in `self`.
    pub fn remove_nodes(&self, victims: &BTreeSet<usize>) -> Result<NodeRemoval> {
        if let Some(&v) = victims.iter().find(|&&v| v >= self.num_nodes) {
            return Err(Error::InvalidArgument(format!("node {v} is not in the graph")));
        }
        if self.num_nodes > 0 && victims.len() == self.num_nodes {
            return Err(Error::InvalidArgument("cannot remove every node".into()));
        }
        let mut relabel = vec![usize::MAX; self.num_nodes];
        let mut kept = Vec::with_capacity(self.num_nodes - victims.len());
        for (v, slot) in relabel.iter_mut().enumerate() {
            if !victims.contains(&v) {
                *slot = kept.len();
                kept.push(v);
            }
        }
        let edges: Vec<_> = self
            .edges
            .iter()
            .filter(|(a, b)| relabel[*a] != usize::MAX && relabel[*b] != usize::MAX)
            .map(|&(a, b)| canonical_edge(relabel[a], relabel[b]))
            .collect();
        let mut features = Vec::with_capacity(kept.len() * self.feature_dim);
        for &v in &kept {
            features.extend_from_slice(self.feature(v));
        }
        // relabel is monotone, so edge order is preserved
        let graph = Self::from_parts(kept.len(), edges, self.feature_dim, features);
        Ok(NodeRemoval { graph, kept })
    }

    /// Removes the given edges; nodes and features are untouched.
    pub fn remove_edges(&self, victims: &BTreeSet<(usize, usize)>) -> Result<Graph> {
        let victims: BTreeSet<_> = victims.iter().map(|&(a, b)| canonical_edge(a, b)).collect();
        if let Some(&(a, b)) = victims.iter().find(|e| !self.has_edge(e.0, e.1)) {
            return Err(Error::InvalidArgument(format!("edge ({a},{b}) is not in the graph")));
        }
        let edges = self
            .edges
            .iter()
            .filter(|e| !victims.contains(e))
            .copied()
            .collect();
        Ok(Self::from_parts(
            self.num_nodes,
            edges,
            self.feature_dim,
            self.features.clone(),
        ))
    }

    /// Uniform random walk of at most `length` steps. Stops early at a node
    /// without neighbors.
    pub fn random_walk<R: Rng + ?Sized>(&self, start: usize, length: usize, rng: &mut R) -> Vec<usize> {
        let mut walk = Vec::with_capacity(length + 1);
        walk.push(start);
        let mut current = start;
        for _ in 0..length {
            let next = &self.adjacency[current];
            if next.is_empty() {
                break;
            }
            current = next[rng.random_range(0..next.len())];
            walk.push(current);
        }
        walk
    }

    /// Component label per node, labels numbered in order of first node.
    pub fn connected_components(&self) -> Vec<usize> {
        self.components_filtered(|_, _| true)
    }

    /// Components of the subgraph that keeps only edges accepted by `keep`.
    pub(crate) fn components_filtered(&self, keep: impl Fn(usize, usize) -> bool) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.num_nodes];
        let mut next = 0;
        let mut stack = Vec::new();
        for s in 0..self.num_nodes {
            if label[s] != usize::MAX {
                continue;
            }
            label[s] = next;
            stack.push(s);
            while let Some(v) = stack.pop() {
                for &w in &self.adjacency[v] {
                    if label[w] == usize::MAX && keep(v, w) {
                        label[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn is_connected(&self) -> bool {
        self.connected_components().iter().all(|&c| c == 0)
    }

    /// Cut edges, canonical and sorted.
    pub fn bridges(&self) -> Vec<(usize, usize)> {
        let n = self.num_nodes;
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0; n];
        let mut timer = 0;
        let mut out = Vec::new();
        // iterative DFS: (node, parent, next neighbor position)
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((root, usize::MAX, 0));
            while let Some(&mut (v, parent, ref mut pos)) = stack.last_mut() {
                if *pos < self.adjacency[v].len() {
                    let w = self.adjacency[v][*pos];
                    *pos += 1;
                    if w == parent {
                        continue;
                    }
                    if disc[w] == usize::MAX {
                        disc[w] = timer;
                        low[w] = timer;
                        timer += 1;
                        stack.push((w, v, 0));
                    } else {
                        low[v] = low[v].min(disc[w]);
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[v]);
                        if low[v] > disc[parent] {
                            out.push(canonical_edge(parent, v));
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Same graph with nodes renamed by `perm` (old index `v` becomes `perm[v]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.num_nodes {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let mut rows = vec![Vec::new(); self.num_nodes];
        for v in 0..self.num_nodes {
            rows[perm[v]] = self.feature(v).to_vec();
        }
        Graph::new(
            self.num_nodes,
            self.edges.iter().map(|&(a, b)| (perm[a], perm[b])),
            rows,
        )
    }

    /// Parses the canonical JSON form. Errors carry a JSON path.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "$".into(),
            message: e.to_string(),
        })?;
        Self::from_value(&value, "$")
    }

    pub fn from_value(value: &Value, path: &str) -> Result<Self> {
        let obj = value.as_object().ok_or_else(|| schema(path, "expected an object"))?;
        let num_nodes = obj
            .get("num_nodes")
            .ok_or_else(|| schema(path, "missing field `num_nodes`"))?
            .as_u64()
            .ok_or_else(|| schema(&format!("{path}.num_nodes"), "expected a non-negative integer"))?
            as usize;

        let edges_val = obj
            .get("edges")
            .ok_or_else(|| schema(path, "missing field `edges`"))?
            .as_array()
            .ok_or_else(|| schema(&format!("{path}.edges"), "expected an array"))?;
        let mut seen = BTreeSet::new();
        let mut edges = Vec::with_capacity(edges_val.len());
        for (i, e) in edges_val.iter().enumerate() {
            let epath = format!("{path}.edges[{i}]");
            let pair = e
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| schema(&epath, "expected a pair of node indices"))?;
            let mut ends = [0usize; 2];
            for (k, x) in pair.iter().enumerate() {
                ends[k] = x
                    .as_u64()
                    .ok_or_else(|| schema(&format!("{epath}[{k}]"), "expected a non-negative integer"))?
                    as usize;
                if ends[k] >= num_nodes {
                    return Err(schema(
                        &format!("{epath}[{k}]"),
                        &format!("dangling node index {} (num_nodes = {num_nodes})", ends[k]),
                    ));
                }
            }
            if ends[0] == ends[1] {
                return Err(schema(&epath, "self-loop"));
            }
            let canon = canonical_edge(ends[0], ends[1]);
            if !seen.insert(canon) {
                return Err(schema(
                    &epath,
                    &format!("duplicate edge ({},{}) after canonicalization", canon.0, canon.1),
                ));
            }
            edges.push(canon);
        }

        let rows = match obj.get("features") {
            None => vec![Vec::new(); num_nodes],
            Some(f) => {
                let fpath = format!("{path}.features");
                let arr = f.as_array().ok_or_else(|| schema(&fpath, "expected an array"))?;
                if arr.len() != num_nodes {
                    return Err(schema(
                        &fpath,
                        &format!("{} feature rows for {num_nodes} nodes", arr.len()),
                    ));
                }
                let mut rows = Vec::with_capacity(num_nodes);
                for (v, row) in arr.iter().enumerate() {
                    let rpath = format!("{fpath}[{v}]");
                    let row = row.as_array().ok_or_else(|| schema(&rpath, "expected an array"))?;
                    let values = row
                        .iter()
                        .enumerate()
                        .map(|(k, x)| {
                            x.as_f64()
                                .filter(|x| x.is_finite())
                                .ok_or_else(|| schema(&format!("{rpath}[{k}]"), "expected a finite number"))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if let Some(first) = rows.first().map(Vec::len) {
                        if values.len() != first {
                            return Err(schema(
                                &rpath,
                                &format!("row has {} values, expected {first}", values.len()),
                            ));
                        }
                    }
                    rows.push(values);
                }
                rows
            }
        };
        Graph::new(num_nodes, edges, rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("graph serialization is infallible")
    }
}

fn schema(path: &str, message: &str) -> Error {
    Error::Schema {
        path: path.to_string(),
        message: message.to_string(),
    }
}

impl Serialize for Graph {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..self.num_nodes).map(|v| self.feature(v)).collect();
        let edges: Vec<[usize; 2]> = self.edges.iter().map(|&(a, b)| [a, b]).collect();
        let mut s = serializer.serialize_struct("Graph", 3)?;
        s.serialize_field("num_nodes", &self.num_nodes)?;
        s.serialize_field("edges", &edges)?;
        s.serialize_field("features", &rows)?;
        s.end()
    }
}

/// Result of [`Graph::remove_nodes`].
#[derive(Clone, Debug, PartialEq)]
pub struct NodeRemoval {
    pub graph: Graph,
    /// `kept[new_index] == old_index`.
    pub kept: Vec<usize>,
}

/// Fixed-length sequence of snapshots.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphSeries {
    snapshots: Vec<Graph>,
}

impl GraphSeries {
    pub fn new(snapshots: Vec<Graph>) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::InvalidGraph("a series needs at least one snapshot".into()));
        }
        Ok(Self { snapshots })
    }

    pub fn snapshots(&self) -> &[Graph] {
        &self.snapshots
    }

    pub fn snapshots_mut(&mut self) -> &mut [Graph] {
        &mut self.snapshots
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Schema {
            path: "$".into(),
            message: e.to_string(),
        })?;
        Self::from_value(&value, "$")
    }

    pub fn from_value(value: &Value, path: &str) -> Result<Self> {
        let snaps = value
            .get("snapshots")
            .ok_or_else(|| schema(path, "missing field `snapshots`"))?
            .as_array()
            .ok_or_else(|| schema(&format!("{path}.snapshots"), "expected an array"))?;
        if snaps.is_empty() {
            return Err(schema(&format!("{path}.snapshots"), "a series needs at least one snapshot"));
        }
        let snapshots = snaps
            .iter()
            .enumerate()
            .map(|(t, g)| Graph::from_value(g, &format!("{path}.snapshots[{t}]")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(snapshots)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("series serialization is infallible")
    }
}

/// The thing being scored: a node, an edge, or a node at one time step.
///
/// Ordering (used for tie-breaking) is by kind, then indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UnitId {
    Node(usize),
    Edge(usize, usize),
    NodeTime { node: usize, time: usize },
}

impl UnitId {
    pub fn edge(a: usize, b: usize) -> Self {
        let (a, b) = canonical_edge(a, b);
        UnitId::Edge(a, b)
    }

    pub fn kind(&self) -> UnitKind {
        match self {
            UnitId::Node(_) => UnitKind::Node,
            UnitId::Edge(..) => UnitKind::Edge,
            UnitId::NodeTime { .. } => UnitKind::NodeTime,
        }
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitId::Node(v) => write!(f, "node:{v}"),
            UnitId::Edge(a, b) => write!(f, "edge:{a}-{b}"),
            UnitId::NodeTime { node, time } => write!(f, "node-time:{node}@{time}"),
        }
    }
}

impl FromStr for UnitId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse unit id `{s}`"));
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
        match kind {
            "node" => Ok(UnitId::Node(num(rest)?)),
            "edge" => {
                let (a, b) = rest.split_once('-').ok_or_else(bad)?;
                Ok(UnitId::edge(num(a)?, num(b)?))
            }
            "node-time" => {
                let (v, t) = rest.split_once('@').ok_or_else(bad)?;
                Ok(UnitId::NodeTime {
                    node: num(v)?,
                    time: num(t)?,
                })
            }
            _ => Err(bad()),
        }
    }
}

impl Serialize for UnitId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnitKind {
    Node,
    Edge,
    NodeTime,
}

impl UnitKind {
    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Node => "node",
            UnitKind::Edge => "edge",
            UnitKind::NodeTime => "node-time",
        }
    }
}

impl FromStr for UnitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(UnitKind::Node),
            "edge" => Ok(UnitKind::Edge),
            "node-time" | "node_time" => Ok(UnitKind::NodeTime),
            _ => Err(Error::InvalidArgument(format!("unknown unit kind `{s}`"))),
        }
    }
}

/// Borrowed explanation target.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Graph(&'a Graph),
    Series(&'a GraphSeries),
}

impl Target<'_> {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Target::Graph(_) => "graph",
            Target::Series(_) => "series",
        }
    }

    pub fn to_json(&self) -> String {
        match self {
            Target::Graph(g) => g.to_json(),
            Target::Series(s) => s.to_json(),
        }
    }

    /// Every unit of `kind` in canonical order.
    pub fn units(&self, kind: UnitKind) -> Result<Vec<UnitId>> {
        match (self, kind) {
            (Target::Graph(g), UnitKind::Node) => Ok((0..g.num_nodes()).map(UnitId::Node).collect()),
            (Target::Graph(g), UnitKind::Edge) => {
                Ok(g.edges().iter().map(|&(a, b)| UnitId::Edge(a, b)).collect())
            }
            (Target::Series(s), UnitKind::NodeTime) => Ok(s
                .snapshots()
                .iter()
                .enumerate()
                .flat_map(|(time, g)| (0..g.num_nodes()).map(move |node| UnitId::NodeTime { node, time }))
                .collect()),
            (t, k) => Err(Error::Incompatible(format!(
                "{} units are not defined for a {} target",
                k.name(),
                t.kind_name()
            ))),
        }
    }
}

/// Owned explanation target.
#[derive(Clone, Debug, PartialEq)]
pub enum OwnedTarget {
    Graph(Graph),
    Series(GraphSeries),
}

impl OwnedTarget {
    pub fn as_target(&self) -> Target<'_> {
        match self {
            OwnedTarget::Graph(g) => Target::Graph(g),
            OwnedTarget::Series(s) => Target::Series(s),
        }
    }

    /// Accepts either a graph or a `{"snapshots": ...}` document.
    pub fn from_value(value: &Value) -> Result<Self> {
        if value.get("snapshots").is_some() {
            GraphSeries::from_value(value, "$").map(OwnedTarget::Series)
        } else {
            Graph::from_value(value, "$").map(OwnedTarget::Graph)
        }
    }
}

impl From<Graph> for OwnedTarget {
    fn from(g: Graph) -> Self {
        OwnedTarget::Graph(g)
    }
}

impl From<GraphSeries> for OwnedTarget {
    fn from(s: GraphSeries) -> Self {
        OwnedTarget::Series(s)
    }
}
