//! Batch node selection.
//!
//! Candidates close to already-labeled nodes are dropped first, the rest are
//! clustered in embedding space, and each cluster contributes the node with
//! the best combined rank of closeness to its centroid and neighborhood
//! cleanliness. Both scores are converted to rank percentiles so `beta`
//! trades them off independently of their scales.

mod kmeans;

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use kmeans::{kmeans, ClusterAssignment};

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, NodeId, WeightedGraph};
use crate::nn::{cosine, euclidean, DenseMatrix};

/// Guard against division by zero in [`representativeness`].
pub const DISTANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// Nodes selected per iteration (`S`).
    pub batch_size: usize,
    /// Each labeled node "covers" this many nearby pool nodes (`h`).
    pub coverage_factor: f64,
    /// Weight of the cleanliness percentile.
    pub beta: f64,
    pub kmeans_iters: usize,
    /// Let every cluster choose from the whole filtered pool instead of its
    /// own members.
    pub global_argmin: bool,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            coverage_factor: 2.0,
            beta: 1.0,
            kmeans_iters: 100,
            global_argmin: false,
        }
    }
}

impl SelectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.coverage_factor > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "coverage_factor must be > 1, got {}",
                self.coverage_factor
            )));
        }
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidArgument(format!("beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    /// Number of pool nodes removed around `labeled` nodes.
    pub fn removal_count(&self, labeled: usize) -> usize {
        (labeled as f64 * self.coverage_factor).floor() as usize
    }
}

fn distance_to_set(embeds: &DenseMatrix, v: NodeId, set: &[NodeId]) -> f64 {
    set.iter()
        .map(|&l| euclidean(embeds.row(v), embeds.row(l)))
        .fold(f64::INFINITY, f64::min)
}

/// Drops the `count` pool nodes nearest to `labeled` (ties by node id) and
/// returns the rest in pool order.
pub fn remove_nearest(pool: &[NodeId], labeled: &[NodeId], embeds: &DenseMatrix, count: usize) -> Result<Vec<NodeId>> {
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("labeled set is empty".into()));
    }
    if pool.len() <= count {
        return Err(Error::PoolExhausted(format!(
            "removing {count} nodes would empty a pool of {}",
            pool.len()
        )));
    }
    let mut ranked: Vec<(f64, NodeId)> = pool.iter().map(|&v| (distance_to_set(embeds, v, labeled), v)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut removed = vec![false; embeds.rows()];
    for &(_, v) in &ranked[..count] {
        removed[v] = true;
    }
    Ok(pool.iter().copied().filter(|&v| !removed[v]).collect())
}

/// Removes `floor(|labeled| · h)` well-represented nodes from the pool.
pub fn remove_well_represented(pool: &[NodeId], labeled: &[NodeId], embeds: &DenseMatrix, h: f64) -> Result<Vec<NodeId>> {
    let count = (labeled.len() as f64 * h).floor() as usize;
    remove_nearest(pool, labeled, embeds, count)
}

/// `1 / (d + 1e-12)` with Euclidean `d`.
pub fn representativeness(embedding: &[f64], centroid: &[f64]) -> f64 {
    1.0 / (euclidean(embedding, centroid) + DISTANCE_EPS)
}

/// Sum of raw-feature cosines between `v` and its positive-weight neighbors.
pub fn cleanliness(v: NodeId, graph: &WeightedGraph, x: &FeatureMatrix) -> f64 {
    graph
        .neighbors(v)
        .iter()
        .filter(|&&(_, w)| w > 0.0)
        .map(|&(j, _)| cosine(x.row(v), x.row(j)))
        .sum()
}

/// [`cleanliness`] for every node.
pub fn cleanliness_scores(graph: &WeightedGraph, x: &FeatureMatrix) -> Vec<f64> {
    (0..graph.num_nodes()).map(|v| cleanliness(v, graph, x)).collect()
}

/// Rank percentiles with the highest score at 0 and the lowest at 1.
///
/// Ties are ordered by node id. Output is aligned with the input.
pub fn percentiles(scores: &[(NodeId, f64)]) -> Vec<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| match scores[b].1.total_cmp(&scores[a].1) {
        Ordering::Equal => scores[a].0.cmp(&scores[b].0),
        o => o,
    });
    let mut out = vec![0.0; n];
    if n > 1 {
        for (rank, &idx) in order.iter().enumerate() {
            out[idx] = rank as f64 / (n - 1) as f64;
        }
    }
    out
}

/// One node per cluster minimizing `r̂ + β·ĉl`.
///
/// `v_filter` lists the clustered nodes in the same order as the points
/// given to [`kmeans`]. `clean` holds the cleanliness of every node.
/// Representativeness percentiles for centroid `s` and cleanliness
/// percentiles are ranked over all of `v_filter`.
pub fn select_batch(
    v_filter: &[NodeId],
    assignment: &ClusterAssignment,
    embeds: &DenseMatrix,
    clean: &[f64],
    beta: f64,
    global_argmin: bool,
) -> Result<Vec<NodeId>> {
    if v_filter.is_empty() {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    }
    if assignment.membership.len() != v_filter.len() {
        return Err(Error::Shape {
            op: "select_batch",
            expected: format!("{} memberships", v_filter.len()),
            actual: assignment.membership.len().to_string(),
        });
    }
    let clean_pct = percentiles(&v_filter.iter().map(|&v| (v, clean[v])).collect::<Vec<_>>());
    let mut picked = vec![false; v_filter.len()];
    let mut batch = Vec::with_capacity(assignment.num_clusters());

    for s in 0..assignment.num_clusters() {
        let centroid = assignment.centroids.row(s);
        let rep: Vec<(NodeId, f64)> = v_filter
            .iter()
            .map(|&v| (v, representativeness(embeds.row(v), centroid)))
            .collect();
        let rep_pct = percentiles(&rep);
        let best = (0..v_filter.len())
            .filter(|&p| !picked[p] && (global_argmin || assignment.membership[p] == s))
            .map(|p| (rep_pct[p] + beta * clean_pct[p], v_filter[p], p))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((_, v, p)) = best {
            picked[p] = true;
            batch.push(v);
        }
    }
    Ok(batch)
}

/// Uniform sample of `k` pool nodes without replacement.
pub fn random_select(pool: &[NodeId], k: usize, seed: u64) -> Result<Vec<NodeId>> {
    if pool.len() < k {
        return Err(Error::InsufficientCandidates {
            needed: k,
            available: pool.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, pool.len(), k).into_iter().map(|i| pool[i]).collect())
}
