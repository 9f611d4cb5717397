use alloc::vec;
use alloc::vec::Vec;

use super::{adjacency_lists, Graph};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GraphStats {
    /// `2|E| / (n(n-1))`.
    pub density: f64,
    /// Mean local clustering coefficient; nodes with degree < 2 count as 0.
    pub avg_clustering: f64,
}

fn sorted_intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

pub fn graph_stats(g: &Graph) -> GraphStats {
    let n = g.n();
    let density = if n < 2 { 0.0 } else { 2.0 * g.num_edges() as f64 / (n as f64 * (n - 1) as f64) };
    let adj = adjacency_lists(n, g.edges());
    // Each edge (a, b) closes |N(a) ∩ N(b)| triangles through both a and b;
    // summing over edges counts every triangle at a node twice.
    let mut twice_triangles = vec![0usize; n];
    for &(a, b) in g.edges() {
        let common = sorted_intersection(&adj[a], &adj[b]);
        twice_triangles[a] += common;
        twice_triangles[b] += common;
    }
    let total: f64 = (0..n)
        .map(|v| {
            let d = adj[v].len();
            if d < 2 {
                0.0
            } else {
                (twice_triangles[v] / 2) as f64 / (d * (d - 1) / 2) as f64
            }
        })
        .sum();
    GraphStats { density, avg_clustering: if n == 0 { 0.0 } else { total / n as f64 } }
}

/// Number of connected components (isolated nodes count individually).
pub fn connected_components(g: &Graph) -> usize {
    let adj = g.neighbors();
    let mut seen = vec![false; g.n()];
    let mut stack: Vec<usize> = Vec::new();
    let mut count = 0;
    for s in 0..g.n() {
        if seen[s] {
            continue;
        }
        count += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
    }
    count
}
