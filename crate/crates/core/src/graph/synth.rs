use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureMatrix, LabelStore, WeightedGraph};
use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

/// How node features are drawn from the class label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureModel {
    /// Standard normal class means plus `N(0, noise²)` per entry.
    Gaussian { noise: f64 },
    /// Binary bag of words. The vocabulary is split into one topic block per
    /// class; each of a node's `words` distinct words comes from its class
    /// block with probability `topic_prob` and from the whole vocabulary
    /// otherwise.
    BagOfWords { words: usize, topic_prob: f64 },
}

/// Stochastic block model with class-dependent features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub features: FeatureModel,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let (p_in, p_out) = (self.p_in, self.p_out);
        if !(0.0 <= p_out && p_out < p_in && p_in <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
            )));
        }
        if self.classes < 2 || self.nodes_per_class == 0 || self.feature_dim == 0 {
            return Err(Error::InvalidArgument(
                "need >= 2 classes, >= 1 node per class and feature_dim >= 1".into(),
            ));
        }
        match self.features {
            FeatureModel::Gaussian { noise } => {
                if !(noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::InvalidArgument(format!("feature noise must be >= 0, got {noise}")));
                }
            }
            FeatureModel::BagOfWords { words, topic_prob } => {
                let block = self.feature_dim / self.classes;
                if words == 0 || words > block {
                    return Err(Error::InvalidArgument(format!(
                        "words per node must be in 1..={block} (vocabulary / classes), got {words}"
                    )));
                }
                if !(0.0..=1.0).contains(&topic_prob) {
                    return Err(Error::InvalidArgument(format!("topic_prob must be in [0, 1], got {topic_prob}")));
                }
            }
        }
        Ok(())
    }
}

/// Samples an SBM graph and features. Node ids are assigned to classes in
/// shuffled order.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Dataset> {
    spec.validate()?;
    let (classes, dim) = (spec.classes, spec.feature_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = classes * spec.nodes_per_class;
    let mut labels: Vec<usize> = (0..n).map(|i| i / spec.nodes_per_class).collect();
    labels.shuffle(&mut rng);

    let mut data = vec![0.0; n * dim];
    match spec.features {
        FeatureModel::Gaussian { noise } => {
            let means: Vec<Vec<f64>> = (0..classes)
                .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
                .collect();
            for (row, &class) in data.chunks_mut(dim).zip(&labels) {
                for (v, &mu) in row.iter_mut().zip(&means[class]) {
                    let eps: f64 = rng.sample(StandardNormal);
                    *v = mu + noise * eps;
                }
            }
        }
        FeatureModel::BagOfWords { words, topic_prob } => {
            let block = dim / classes;
            for (row, &class) in data.chunks_mut(dim).zip(&labels) {
                let mut chosen = BTreeSet::new();
                while chosen.len() < words {
                    let w = if rng.random::<f64>() < topic_prob {
                        class * block + rng.random_range(0..block)
                    } else {
                        rng.random_range(0..dim)
                    };
                    chosen.insert(w);
                }
                for w in chosen {
                    row[w] = 1.0;
                }
            }
        }
    }

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { spec.p_in } else { spec.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    Dataset::new(
        WeightedGraph::from_edges(n, edges)?,
        FeatureMatrix::new(DenseMatrix::new(n, dim, data)?)?,
        LabelStore::with_classes(labels, classes)?,
    )
}
