//! Synthetic graphs with known explanations.
//!
//! Composite graphs join their parts with a single bridge edge. Generators
//! return the target together with its ground-truth units.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::graph::{Graph, GraphSeries, UnitId};

/// `n`-node ring.
pub fn cycle(n: usize) -> Graph {
    assert!(n >= 3, "a cycle needs at least 3 nodes");
    Graph::structure(n, (0..n).map(|i| (i, (i + 1) % n))).expect("valid cycle")
}

/// Ring of `n - 1` nodes plus hub `n - 1` adjacent to every rim node.
pub fn wheel(n: usize) -> Graph {
    assert!(n >= 4, "a wheel needs at least 4 nodes");
    let rim = n - 1;
    let edges = (0..rim).flat_map(|i| [(i, (i + 1) % rim), (i, rim)]);
    Graph::structure(n, edges).expect("valid wheel")
}

/// Hub index of [`wheel`]`(n)`.
pub fn wheel_hub(n: usize) -> usize {
    n - 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Wheel,
    Cycle,
}

impl Component {
    fn build(self, n: usize) -> (Graph, Option<usize>) {
        match self {
            Component::Wheel => (wheel(n), Some(wheel_hub(n))),
            Component::Cycle => (cycle(n), None),
        }
    }

    /// Nodes allowed to carry the joining edge (rim nodes for wheels).
    fn attach_points(self, n: usize) -> usize {
        match self {
            Component::Wheel => n - 1,
            Component::Cycle => n,
        }
    }
}

/// Disjoint union of `a` and `b`, plus `extra` edges given in the union's labels.
fn union(a: &Graph, b: &Graph, extra: &[(usize, usize)]) -> Graph {
    let off = a.num_nodes();
    let edges = a
        .edges()
        .iter()
        .copied()
        .chain(b.edges().iter().map(|&(x, y)| (x + off, y + off)))
        .chain(extra.iter().copied());
    Graph::structure(off + b.num_nodes(), edges).expect("valid union")
}

/// Two components joined by one bridge between uniformly chosen rim/cycle
/// nodes. Ground truth: the hub nodes present.
pub fn gen_two_connected<R: Rng + ?Sized>(
    left: Component,
    right: Component,
    n_left: usize,
    n_right: usize,
    rng: &mut R,
) -> (Graph, Vec<UnitId>) {
    let (a, hub_a) = left.build(n_left);
    let (b, hub_b) = right.build(n_right);
    let x = rng.random_range(0..left.attach_points(n_left));
    let y = rng.random_range(0..right.attach_points(n_right)) + n_left;
    let g = union(&a, &b, &[(x, y)]);
    let truth = hub_a
        .into_iter()
        .chain(hub_b.map(|h| h + n_left))
        .map(UnitId::Node)
        .collect();
    (g, truth)
}

/// Two cycles joined by the edge `(0, n_left)`, which is the ground truth.
pub fn gen_glasses(n_left: usize, n_right: usize) -> (Graph, Vec<UnitId>) {
    let g = union(&cycle(n_left), &cycle(n_right), &[(0, n_left)]);
    (g, vec![UnitId::edge(0, n_left)])
}

/// Two cycles with no connection; nothing to find.
pub fn gen_disconnected_cycles(n_left: usize, n_right: usize) -> (Graph, Vec<UnitId>) {
    (union(&cycle(n_left), &cycle(n_right), &[]), Vec::new())
}

pub const GRID_SIDE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridPattern {
    None,
    Rectangle,
    Line,
    RectLine,
}

/// 4×4 grid graph with all-zero scalar features.
pub fn grid() -> Graph {
    let s = GRID_SIDE;
    let mut edges = Vec::with_capacity(2 * s * (s - 1));
    for r in 0..s {
        for c in 0..s {
            if c + 1 < s {
                edges.push((r * s + c, r * s + c + 1));
            }
            if r + 1 < s {
                edges.push((r * s + c, (r + 1) * s + c));
            }
        }
    }
    Graph::new(s * s, edges, vec![vec![0.0]; s * s]).expect("valid grid")
}

fn rectangle_cells<R: Rng + ?Sized>(rng: &mut R) -> Vec<usize> {
    let s = GRID_SIDE;
    let r = rng.random_range(0..s - 1);
    let c = rng.random_range(0..s - 1);
    vec![r * s + c, r * s + c + 1, (r + 1) * s + c, (r + 1) * s + c + 1]
}

fn line_cells<R: Rng + ?Sized>(rng: &mut R) -> Vec<usize> {
    let s = GRID_SIDE;
    let k = rng.random_range(0..s);
    if rng.random_bool(0.5) {
        (0..s).map(|c| k * s + c).collect()
    } else {
        (0..s).map(|r| r * s + k).collect()
    }
}

/// Grid with a planted pattern of feature-1 nodes, which form the ground truth.
pub fn gen_grid_pattern<R: Rng + ?Sized>(pattern: GridPattern, rng: &mut R) -> (Graph, Vec<UnitId>) {
    let cells: BTreeSet<usize> = match pattern {
        GridPattern::None => BTreeSet::new(),
        GridPattern::Rectangle => rectangle_cells(rng).into_iter().collect(),
        GridPattern::Line => line_cells(rng).into_iter().collect(),
        GridPattern::RectLine => rectangle_cells(rng).into_iter().chain(line_cells(rng)).collect(),
    };
    let mut g = grid();
    for &v in &cells {
        g.feature_mut(v)[0] = 1.0;
    }
    (g, cells.into_iter().map(UnitId::Node).collect())
}

/// Barabási–Albert graph: a triangle seed, then each new node attaches to
/// `m` distinct nodes chosen with probability proportional to degree.
pub fn barabasi_albert<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Graph {
    assert!(m >= 1 && n > m, "need n > m >= 1");
    let mut edges: Vec<(usize, usize)> = Vec::new();
    // endpoint list: node v appears deg(v) times
    let mut ends: Vec<usize> = Vec::new();
    for a in 0..=m {
        for b in (a + 1)..=m {
            edges.push((a, b));
            ends.extend([a, b]);
        }
    }
    for v in (m + 1)..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(*ends.choose(rng).expect("nonempty seed"));
        }
        for t in targets {
            edges.push((t, v));
            ends.extend([t, v]);
        }
    }
    Graph::structure(n, edges).expect("valid BA graph")
}

pub const SERIES_LENGTH: usize = 3;

/// A series of [`SERIES_LENGTH`] copies of `structure` with zero scalar
/// features. Positive series get a chunk (a random node plus 2 or 3 of its
/// neighbors) set to 1 at one random time; the chunk at that time is the
/// ground truth.
pub fn gen_series<R: Rng + ?Sized>(structure: &Graph, positive: bool, rng: &mut R) -> (GraphSeries, Vec<UnitId>) {
    let n = structure.num_nodes();
    let blank = || Graph::new(n, structure.edges().iter().copied(), vec![vec![0.0]; n]).expect("valid snapshot");
    let mut snapshots: Vec<Graph> = (0..SERIES_LENGTH).map(|_| blank()).collect();
    let mut truth = Vec::new();
    if positive {
        let candidates: Vec<usize> = (0..n).filter(|&v| structure.degree(v) >= 2).collect();
        let center = *candidates.choose(rng).expect("structure has a node of degree 2");
        let extra = rng.random_range(2..=3.min(structure.degree(center)));
        let mut chunk: Vec<usize> = structure
            .neighbors(center)
            .choose_multiple(rng, extra)
            .copied()
            .collect();
        chunk.push(center);
        chunk.sort_unstable();
        let time = rng.random_range(0..SERIES_LENGTH);
        for &v in &chunk {
            snapshots[time].feature_mut(v)[0] = 1.0;
        }
        truth = chunk.into_iter().map(|node| UnitId::NodeTime { node, time }).collect();
    }
    (GraphSeries::new(snapshots).expect("valid series"), truth)
}
