//! Graph, feature and label containers plus everything that produces them:
//! bundle I/O, noise injection, split construction and synthetic graphs.

mod bundle;
mod noise;
mod splits;
mod synth;

pub use bundle::{
    load_bundle, load_noise_edges, save_bundle, save_noise_edges, write_weighted_edges, EDGES_FILE,
    NODES_FILE, NOISE_FILE, WEIGHTED_EDGES_FILE,
};
pub use noise::{inject_interclass_edges, inject_random_interclass_edges, NoiseInjection};
pub use splits::{make_splits, SplitSet, SplitSizes};
pub use synth::{generate_sbm, FeatureModel, SbmSpec};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

pub type NodeId = usize;

/// Unordered node pair stored as `(min, max)`.
pub type EdgeKey = (NodeId, NodeId);

#[inline]
pub fn edge_key(i: NodeId, j: NodeId) -> EdgeKey {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

/// Undirected graph with edge weights in `[0, 1]`.
///
/// Adjacency lists hold `(neighbor, weight)` sorted by neighbor id, and every
/// pair is stored on both endpoints with the same value. A stored pair with
/// weight 0 is still part of the edge set (the support); reweighting never
/// adds pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adj: Vec<Vec<(NodeId, f64)>>,
    num_edges: usize,
}

impl WeightedGraph {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            adj: vec![Vec::new(); num_nodes],
            num_edges: 0,
        }
    }

    /// Builds a unit-weight graph. Duplicate pairs (in either orientation)
    /// are merged.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        Self::from_weighted_edges(num_nodes, edges.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    /// Builds a weighted graph; for duplicate pairs the first weight wins.
    pub fn from_weighted_edges<I>(num_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (NodeId, NodeId, f64)>,
    {
        let mut seen = HashSet::new();
        let mut adj = vec![Vec::new(); num_nodes];
        for (i, j, w) in edges {
            for node in [i, j] {
                if node >= num_nodes {
                    return Err(Error::NodeOutOfRange { node, num_nodes });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            check_weight(w)?;
            if seen.insert(edge_key(i, j)) {
                adj[i].push((j, w));
                adj[j].push((i, w));
            }
        }
        for list in &mut adj {
            list.sort_unstable_by_key(|&(n, _)| n);
        }
        Ok(Self {
            adj,
            num_edges: seen.len(),
        })
    }

    #[inline]
    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    /// Number of stored unordered pairs, including zero-weight ones.
    #[inline]
    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    #[inline]
    pub fn neighbors(&self, i: NodeId) -> &[(NodeId, f64)] {
        &self.adj[i]
    }

    pub fn has_edge(&self, i: NodeId, j: NodeId) -> bool {
        self.adj[i].binary_search_by_key(&j, |&(n, _)| n).is_ok()
    }

    /// Weight of the pair, 0 when absent.
    pub fn weight(&self, i: NodeId, j: NodeId) -> f64 {
        match self.adj[i].binary_search_by_key(&j, |&(n, _)| n) {
            Ok(pos) => self.adj[i][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn weighted_degree(&self, i: NodeId) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum()
    }

    /// Each unordered pair once as `(i, j, w)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.adj.iter().enumerate().flat_map(|(i, list)| {
            list.iter()
                .filter(move |&&(j, _)| j > i)
                .map(move |&(j, w)| (i, j, w))
        })
    }

    pub fn edge_list(&self) -> Vec<EdgeKey> {
        self.edges().map(|(i, j, _)| (i, j)).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.edges().map(|(_, _, w)| w).sum()
    }

    /// Same support, new weights. `weight_of` is called once per unordered
    /// pair with `i < j`, so the result is symmetric by construction.
    pub fn reweighted<F>(&self, mut weight_of: F) -> Result<Self>
    where
        F: FnMut(NodeId, NodeId) -> f64,
    {
        let mut out = self.clone();
        for i in 0..out.adj.len() {
            for k in 0..out.adj[i].len() {
                let j = out.adj[i][k].0;
                if j <= i {
                    continue;
                }
                let w = weight_of(i, j);
                check_weight(w)?;
                out.adj[i][k].1 = w;
                let back = out.adj[j]
                    .binary_search_by_key(&i, |&(n, _)| n)
                    .expect("adjacency is symmetric");
                out.adj[j][back].1 = w;
            }
        }
        Ok(out)
    }

    /// All stored pairs set to weight 1.
    pub fn unit_weights(&self) -> Self {
        self.reweighted(|_, _| 1.0).expect("unit weight is valid")
    }

    /// Drops pairs whose weight is exactly zero.
    pub fn pruned(&self) -> Self {
        let mut out = self.clone();
        for list in &mut out.adj {
            list.retain(|&(_, w)| w > 0.0);
        }
        out.num_edges = out.adj.iter().map(Vec::len).sum::<usize>() / 2;
        out
    }

    /// A unit-weight copy that also contains `extra` pairs.
    pub fn with_added_edges(&self, extra: &[EdgeKey]) -> Result<Self> {
        let existing = self.edges();
        Self::from_weighted_edges(self.num_nodes(), existing.chain(extra.iter().map(|&(i, j)| (i, j, 1.0))))
    }

    /// A copy without the listed pairs (in either orientation).
    pub fn without_edges(&self, remove: &[EdgeKey]) -> Self {
        let drop: HashSet<EdgeKey> = remove.iter().map(|&(i, j)| edge_key(i, j)).collect();
        let kept: Vec<_> = self.edges().filter(|&(i, j, _)| !drop.contains(&(i, j))).collect();
        Self::from_weighted_edges(self.num_nodes(), kept).expect("subset of a valid graph")
    }
}

fn check_weight(w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("edge weight {w} outside [0, 1]")))
    }
}

/// Per-node raw features `X` (N × d, d ≥ 1).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix(DenseMatrix);

impl FeatureMatrix {
    pub fn new(m: DenseMatrix) -> Result<Self> {
        if m.cols() == 0 {
            return Err(Error::InvalidArgument("feature dimension must be at least 1".into()));
        }
        m.check_finite("features")?;
        Ok(Self(m))
    }

    pub fn num_nodes(&self) -> usize {
        self.0.rows()
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: NodeId) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    /// True when every entry is exactly 0 or 1.
    pub fn is_binary(&self) -> bool {
        self.0.as_slice().iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Ground-truth class of every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelStore {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelStore {
    /// The class count is `max(label) + 1` and must be at least 2.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self::with_classes(labels, num_classes)
    }

    pub fn with_classes(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {num_classes}"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    #[inline]
    pub fn get(&self, i: NodeId) -> usize {
        self.labels[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn members(&self, class: usize) -> Vec<NodeId> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == class).collect()
    }
}

/// A graph together with its node features and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub graph: WeightedGraph,
    pub features: FeatureMatrix,
    pub labels: LabelStore,
}

impl Dataset {
    pub fn new(graph: WeightedGraph, features: FeatureMatrix, labels: LabelStore) -> Result<Self> {
        let n = graph.num_nodes();
        if features.num_nodes() != n || labels.len() != n {
            return Err(Error::Shape {
                op: "Dataset::new",
                expected: format!("{n} nodes"),
                actual: format!("{} feature rows, {} labels", features.num_nodes(), labels.len()),
            });
        }
        Ok(Self {
            graph,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }
}
