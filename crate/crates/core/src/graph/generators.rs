use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::{connected_components, Edge, Graph};
use crate::error::{Error, Result};
use crate::numerics::CsrMatrix;
use crate::rng::SeedRng;

/// A Swiss-roll k-nearest-neighbor graph and how it was built.
#[derive(Clone, Debug)]
pub struct SwissRoll {
    pub graph: Graph,
    pub k: usize,
    /// Sampled 3-D coordinates, one row per node.
    pub points: Vec<[f64; 3]>,
    /// More than one means the result is disconnected.
    pub components: usize,
}

fn swiss_roll_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = SeedRng::new(seed);
    (0..n)
        .map(|_| {
            let t = 1.5 * PI * (1.0 + 2.0 * rng.uniform());
            let h = 21.0 * rng.uniform();
            [t * libm::cos(t), h, t * libm::sin(t)]
        })
        .collect()
}

/// Union of each point's `k` nearest neighbors (ties broken by index).
fn knn_edges(points: &[[f64; 3]], k: usize) -> Vec<Edge> {
    let n = points.len();
    let mut edges = Vec::with_capacity(n * k);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        for j in 0..n {
            if i != j {
                let d: f64 = (0..3).map(|c| (points[i][c] - points[j][c]) * (points[i][c] - points[j][c])).sum();
                order.push((d, j));
            }
        }
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j) in order.iter().take(k) {
            edges.push((i.min(j), i.max(j)));
        }
    }
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// `n` points on a Swiss roll joined to their `k` nearest neighbors, then
/// symmetrized. Identity attributes.
pub fn swiss_roll_graph(n: usize, k: usize, seed: u64) -> Result<SwissRoll> {
    if k == 0 || n < k + 1 {
        return Err(Error::InvalidGraph(format!("swiss roll needs 1 <= k < n, got n={n}, k={k}")));
    }
    let points = swiss_roll_points(n, seed);
    let graph = Graph::from_edges(n, knn_edges(&points, k))?;
    let components = connected_components(&graph);
    Ok(SwissRoll { graph, k, points, components })
}

/// Swiss roll whose `k` is chosen by bisection so the edge count lands as
/// close as possible to `target_edges`.
pub fn swiss_roll_tuned(n: usize, target_edges: usize, seed: u64) -> Result<SwissRoll> {
    if n < 2 {
        return Err(Error::InvalidGraph(format!("swiss roll needs n >= 2, got {n}")));
    }
    let points = swiss_roll_points(n, seed);
    let count = |k: usize| knn_edges(&points, k).len();
    // Edge count is nondecreasing in k: find the first k reaching the target.
    let (mut lo, mut hi) = (1usize, n - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if count(mid) >= target_edges {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let mut k = lo;
    if k > 1 && target_edges.abs_diff(count(k - 1)) <= target_edges.abs_diff(count(k)) {
        k -= 1;
    }
    let graph = Graph::from_edges(n, knn_edges(&points, k))?;
    let components = connected_components(&graph);
    Ok(SwissRoll { graph, k, points, components })
}

/// `rows × cols` grid with wraparound: 4-regular, `2·rows·cols` edges.
pub fn torus_graph(rows: usize, cols: usize) -> Result<Graph> {
    if rows < 3 || cols < 3 {
        return Err(Error::InvalidGraph(format!("torus needs rows, cols >= 3, got {rows}x{cols}")));
    }
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::with_capacity(2 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            edges.push((id(r, c), id(r, (c + 1) % cols)));
            edges.push((id(r, c), id((r + 1) % rows, c)));
        }
    }
    Graph::from_edges(rows * cols, edges)
}

/// Planted-partition graph with block-correlated binary attributes; a small
/// stand-in for attributed citation graphs.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockGraphSpec {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Attribute columns per block.
    pub topic_width: usize,
    /// Probability a node carries each of its own block's topic columns.
    pub q_in: f64,
    /// Probability a node carries any other column.
    pub q_out: f64,
}

impl Default for BlockGraphSpec {
    fn default() -> Self {
        BlockGraphSpec { blocks: 4, block_size: 50, p_in: 0.12, p_out: 0.005, topic_width: 20, q_in: 0.25, q_out: 0.02 }
    }
}

pub fn attributed_block_graph(spec: &BlockGraphSpec, seed: u64) -> Result<Graph> {
    let n = spec.blocks * spec.block_size;
    let m = spec.blocks * spec.topic_width;
    let mut rng = SeedRng::new(seed);
    let block = |i: usize| i / spec.block_size;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block(i) == block(j) { spec.p_in } else { spec.p_out };
            if rng.bernoulli(p) {
                edges.push((i, j));
            }
        }
    }
    let mut triplets = Vec::new();
    for i in 0..n {
        for c in 0..m {
            let q = if c / spec.topic_width == block(i) { spec.q_in } else { spec.q_out };
            if rng.bernoulli(q) {
                triplets.push((i, c, 1.0));
            }
        }
    }
    let attributes = CsrMatrix::from_triplets(n, m.max(1), triplets)?;
    let labels = (0..n).map(block).collect();
    Graph::new(n, edges, Some(attributes), Some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::graph_stats;

    #[test]
    fn torus_counts() {
        let t = torus_graph(3, 3).unwrap();
        assert_eq!((t.n(), t.num_edges()), (9, 18));
        assert!(t.degrees().iter().all(|&d| d == 4));
        let t = torus_graph(4, 5).unwrap();
        assert_eq!((t.n(), t.num_edges()), (20, 40));
        assert!(torus_graph(2, 5).is_err());
    }

    #[test]
    fn swiss_roll_deterministic_and_no_isolated_nodes() {
        let a = swiss_roll_graph(120, 5, 9).unwrap();
        let b = swiss_roll_graph(120, 5, 9).unwrap();
        assert_eq!(a.graph, b.graph);
        assert!(a.graph.degrees().iter().all(|&d| d >= 5));
        assert!(swiss_roll_graph(5, 5, 0).is_err());
    }

    #[test]
    fn tuned_swiss_roll_hits_edge_target() {
        let roll = swiss_roll_tuned(200, 1244, 0).unwrap();
        let e = roll.graph.num_edges() as f64;
        assert!((e - 1244.0).abs() <= 0.15 * 1244.0, "edges = {e}, k = {}", roll.k);
    }

    #[test]
    fn block_graph_is_assortative() {
        let g = attributed_block_graph(&BlockGraphSpec::default(), 1).unwrap();
        assert_eq!(g.n(), 200);
        assert_eq!(g.attribute_dim(), 80);
        let labels = g.labels().unwrap();
        let within = g.edges().iter().filter(|&&(a, b)| labels[a] == labels[b]).count();
        assert!(within * 2 > g.num_edges());
        assert!(graph_stats(&g).density < 0.1);
    }
}
