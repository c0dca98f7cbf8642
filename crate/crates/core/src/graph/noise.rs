use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{edge_key, EdgeKey, LabelStore, WeightedGraph};
use crate::error::{Error, Result};

/// A perturbed graph and the pairs that were added to it.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseInjection {
    pub graph: WeightedGraph,
    /// Added pairs as `(min, max)`, sorted.
    pub added: Vec<EdgeKey>,
}

/// Adds `floor(ratio · |E|)` unit-weight edges between previously unconnected
/// nodes of different classes.
pub fn inject_random_interclass_edges(
    g: &WeightedGraph,
    labels: &LabelStore,
    ratio: f64,
    seed: u64,
) -> Result<NoiseInjection> {
    if !(ratio >= 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise ratio must be >= 0, got {ratio}")));
    }
    let count = (ratio * g.num_edges() as f64).floor() as usize;
    inject_interclass_edges(g, labels, count, seed)
}

/// Adds exactly `count` inter-class edges. Use this when chaining injections
/// so the count can be computed against the original edge set.
///
/// Candidates are drawn by rejection sampling, capped at `100 · count`
/// attempts, after which the remaining candidates are enumerated explicitly.
pub fn inject_interclass_edges(
    g: &WeightedGraph,
    labels: &LabelStore,
    count: usize,
    seed: u64,
) -> Result<NoiseInjection> {
    let n = g.num_nodes();
    if labels.len() != n {
        return Err(Error::Shape {
            op: "inject_interclass_edges",
            expected: format!("{n} labels"),
            actual: labels.len().to_string(),
        });
    }
    if count == 0 {
        return Ok(NoiseInjection {
            graph: g.clone(),
            added: Vec::new(),
        });
    }

    let counts = labels.class_counts();
    let same: usize = counts.iter().map(|c| c * c.saturating_sub(1) / 2).sum();
    let all_pairs = n * n.saturating_sub(1) / 2;
    let existing_inter = g
        .edges()
        .filter(|&(i, j, _)| labels.get(i) != labels.get(j))
        .count();
    let available = all_pairs - same - existing_inter;
    if available < count {
        return Err(Error::InsufficientCandidates {
            needed: count,
            available,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut added: HashSet<EdgeKey> = HashSet::with_capacity(count);
    let mut order: Vec<EdgeKey> = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(100);
    let mut attempts = 0;
    while order.len() < count && attempts < max_attempts {
        attempts += 1;
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i == j || labels.get(i) == labels.get(j) || g.has_edge(i, j) {
            continue;
        }
        let key = edge_key(i, j);
        if added.insert(key) {
            order.push(key);
        }
    }

    if order.len() < count {
        let remaining = count - order.len();
        let mut candidates = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if labels.get(i) != labels.get(j) && !g.has_edge(i, j) && !added.contains(&(i, j)) {
                    candidates.push((i, j));
                }
            }
        }
        for idx in sample(&mut rng, candidates.len(), remaining) {
            order.push(candidates[idx]);
        }
    }

    order.sort_unstable();
    let graph = g.with_added_edges(&order)?;
    Ok(NoiseInjection { graph, added: order })
}
