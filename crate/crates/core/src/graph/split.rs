use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use super::{Edge, Graph};
use crate::error::{Error, Result};
use crate::numerics::math;
use crate::rng::SeedRng;

pub const VAL_FRACTION: f64 = 0.05;
pub const TEST_FRACTION: f64 = 0.10;
const MIN_EDGES: usize = 20;

/// Held-out positives with matched negatives for link prediction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSplit {
    pub seed: u64,
    pub train_pos: Vec<Edge>,
    pub val_pos: Vec<Edge>,
    pub test_pos: Vec<Edge>,
    pub val_neg: Vec<Edge>,
    pub test_neg: Vec<Edge>,
}

/// Partitions the edges into train / validation (5%) / test (10%) and draws
/// as many true non-edges of the full graph for validation and test,
/// uniformly without replacement.
pub fn split_edges(g: &Graph, seed: u64) -> Result<EdgeSplit> {
    let m = g.num_edges();
    if m < MIN_EDGES {
        return Err(Error::InvalidGraph(format!("need at least {MIN_EDGES} edges to split, got {m}")));
    }
    let n_val = math::round(VAL_FRACTION * m as f64) as usize;
    let n_test = math::round(TEST_FRACTION * m as f64) as usize;

    let mut rng = SeedRng::new(seed);
    let mut shuffled: Vec<Edge> = g.edges().to_vec();
    rng.shuffle(&mut shuffled);
    let mut test_pos = shuffled[..n_test].to_vec();
    let mut val_pos = shuffled[n_test..n_test + n_val].to_vec();
    let mut train_pos = shuffled[n_test + n_val..].to_vec();
    train_pos.sort_unstable();
    val_pos.sort_unstable();
    test_pos.sort_unstable();

    let negatives = sample_non_edges(g, n_val + n_test, &mut rng)?;
    let test_neg = negatives[..n_test].to_vec();
    let val_neg = negatives[n_test..].to_vec();

    Ok(EdgeSplit { seed, train_pos, val_pos, test_pos, val_neg, test_neg })
}

/// `count` distinct non-edges `(i, j)`, `i < j`, in draw order.
fn sample_non_edges(g: &Graph, count: usize, rng: &mut SeedRng) -> Result<Vec<Edge>> {
    let n = g.n();
    let total = n * n.saturating_sub(1) / 2;
    let available = total - g.num_edges();
    if available < count {
        return Err(Error::TooDense { needed: count, available });
    }
    if available <= 4 * count {
        // Dense regime: enumerate the complement and take a prefix of a shuffle.
        let mut all: Vec<Edge> = Vec::with_capacity(available);
        for i in 0..n {
            for j in i + 1..n {
                if !g.has_edge(i, j) {
                    all.push((i, j));
                }
            }
        }
        rng.shuffle(&mut all);
        all.truncate(count);
        return Ok(all);
    }
    let mut seen: BTreeSet<Edge> = BTreeSet::new();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let a = rng.below(n);
        let b = rng.below(n);
        if a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if g.has_edge(e.0, e.1) || !seen.insert(e) {
            continue;
        }
        out.push(e);
    }
    Ok(out)
}

impl EdgeSplit {
    pub fn num_edges(&self) -> usize {
        self.train_pos.len() + self.val_pos.len() + self.test_pos.len()
    }
}
