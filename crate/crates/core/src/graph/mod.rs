//! Undirected graphs with node attributes, GCN adjacency normalization,
//! link-prediction splits, synthetic generators and summary statistics.

mod generators;
mod split;
mod stats;

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

pub use generators::{attributed_block_graph, swiss_roll_graph, swiss_roll_tuned, torus_graph, BlockGraphSpec, SwissRoll};
pub use split::{split_edges, EdgeSplit, TEST_FRACTION, VAL_FRACTION};
pub use stats::{connected_components, graph_stats, GraphStats};

use crate::error::{Error, Result};
use crate::numerics::{math, CsrMatrix, Matrix};

pub type Edge = (usize, usize);

/// Undirected simple graph. Edges are stored once as `(i, j)` with `i < j`,
/// sorted and free of duplicates.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    attributes: CsrMatrix,
    labels: Option<Vec<usize>>,
}

/// Orients every pair as `(min, max)`, sorts and deduplicates. Self-loops and
/// out-of-range endpoints are rejected.
pub fn canonical_edges(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Vec<Edge>> {
    let mut out: Vec<Edge> = Vec::new();
    for (a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::InvalidGraph(format!("edge ({a}, {b}) outside node range 0..{n}")));
        }
        if a == b {
            return Err(Error::InvalidGraph(format!("self-loop on node {a}")));
        }
        out.push((a.min(b), a.max(b)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

impl Graph {
    /// `attributes = None` means the identity matrix.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = Edge>,
        attributes: Option<CsrMatrix>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let edges = canonical_edges(n, edges)?;
        let attributes = attributes.unwrap_or_else(|| CsrMatrix::identity(n));
        if attributes.rows() != n || attributes.cols() == 0 {
            return Err(Error::InvalidGraph(format!(
                "attribute matrix is {}x{}, expected {n} rows and at least one column",
                attributes.rows(),
                attributes.cols()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::InvalidGraph(format!("{} labels for {n} nodes", l.len())));
            }
        }
        Ok(Graph { n, edges, attributes, labels })
    }

    /// Attribute-free graph (identity attributes).
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        Self::new(n, edges, None, None)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn attributes(&self) -> &CsrMatrix {
        &self.attributes
    }

    pub fn attribute_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// Same topology, new attribute matrix.
    pub fn with_attributes(&self, attributes: CsrMatrix) -> Result<Self> {
        Self::new(self.n, self.edges.iter().copied(), Some(attributes), self.labels.clone())
    }

    /// Sorted neighbor lists.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        adjacency_lists(self.n, &self.edges)
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }

    /// Dense 0/1 adjacency.
    pub fn dense_adjacency(&self) -> Matrix {
        dense_adjacency(self.n, &self.edges)
    }
}

pub(crate) fn adjacency_lists(n: usize, edges: &[Edge]) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    for l in &mut adj {
        l.sort_unstable();
        l.dedup();
    }
    adj
}

pub fn dense_adjacency(n: usize, edges: &[Edge]) -> Matrix {
    let mut m = Matrix::zeros(n, n);
    for &(a, b) in edges {
        m[(a, b)] = 1.0;
        m[(b, a)] = 1.0;
    }
    m
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    matrix: Arc<CsrMatrix>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<CsrMatrix> {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.rows()
    }
}

/// Normalized adjacency over `n` nodes built from `edges` (usually the
/// training positives only). Isolated nodes keep just their self-loop.
pub fn normalize_adjacency(n: usize, edges: &[Edge]) -> Result<NormalizedAdjacency> {
    let edges = canonical_edges(n, edges.iter().copied())?;
    let mut degree = vec![1.0f64; n];
    for &(a, b) in &edges {
        degree[a] += 1.0;
        degree[b] += 1.0;
    }
    let mut triplets = Vec::with_capacity(n + 2 * edges.len());
    for (i, d) in degree.iter().enumerate() {
        triplets.push((i, i, 1.0 / d));
    }
    for &(a, b) in &edges {
        let w = 1.0 / math::sqrt(degree[a] * degree[b]);
        triplets.push((a, b, w));
        triplets.push((b, a, w));
    }
    Ok(NormalizedAdjacency { matrix: Arc::new(CsrMatrix::from_triplets(n, n, triplets)?) })
}
