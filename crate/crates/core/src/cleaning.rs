//! Edge reweighting from pseudo labels.
//!
//! Edges whose endpoints confidently share a pseudo label train an edge
//! predictor as positives, edges across pseudo labels as negatives. The
//! predictor then assigns every observed edge a probability of being clean,
//! which becomes its weight.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKey, FeatureMatrix, LabelStore, NodeId, WeightedGraph};
use crate::nn::{
    adam_step, cosine, dot, mlp_backward, mlp_forward, sigmoid, softmax_rows, softplus, AdamConfig, DenseMatrix,
    MlpParams, OptimizerState, ParamSet,
};

/// Reweighted edges stay inside `[EDGE_WEIGHT_MIN, 1 − EDGE_WEIGHT_MIN]`.
pub const EDGE_WEIGHT_MIN: f64 = f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanConfig {
    /// Confidence threshold for positive pairs.
    pub kappa: f64,
    pub edge_epochs: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Continue from the previous iteration's predictor instead of a fresh one.
    pub warm_start: bool,
    pub optimizer: AdamConfig,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            kappa: 0.9,
            edge_epochs: 100,
            hidden_dim: 64,
            embed_dim: 64,
            warm_start: false,
            optimizer: AdamConfig::default(),
        }
    }
}

impl CleanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::InvalidArgument(format!("kappa must be in [0, 1], got {}", self.kappa)));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument("edge predictor widths must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    Oracle,
    Model,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub label: Vec<usize>,
    pub confidence: Vec<f64>,
    pub source: Vec<LabelSource>,
}

impl PseudoLabels {
    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }
}

/// Softmax argmax per node, with `labeled` nodes replaced by their true label
/// at confidence 1.
pub fn pseudo_labels(logits: &DenseMatrix, labeled: &[NodeId], labels: &LabelStore) -> Result<PseudoLabels> {
    if logits.rows() != labels.len() {
        return Err(Error::Shape {
            op: "pseudo_labels",
            expected: format!("{} logit rows", labels.len()),
            actual: logits.rows().to_string(),
        });
    }
    let probs = softmax_rows(logits);
    let label: Vec<usize> = (0..probs.rows()).map(|r| probs.row_argmax(r)).collect();
    let confidence = label.iter().enumerate().map(|(i, &c)| probs.get(i, c)).collect();
    let mut pl = PseudoLabels {
        label,
        confidence,
        source: vec![LabelSource::Model; labels.len()],
    };
    for &i in labeled {
        pl.label[i] = labels.get(i);
        pl.confidence[i] = 1.0;
        pl.source[i] = LabelSource::Oracle;
    }
    Ok(pl)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeTrainingSet {
    pub positives: Vec<EdgeKey>,
    pub negatives: Vec<EdgeKey>,
}

/// Positives: both endpoints at confidence `>= kappa` with equal pseudo
/// labels. Negatives: unequal pseudo labels, any confidence.
pub fn build_edge_training_set(graph: &WeightedGraph, pl: &PseudoLabels, kappa: f64) -> EdgeTrainingSet {
    let mut ts = EdgeTrainingSet::default();
    for (i, j, _) in graph.edges() {
        if pl.label[i] != pl.label[j] {
            ts.negatives.push((i, j));
        } else if pl.confidence[i] >= kappa && pl.confidence[j] >= kappa {
            ts.positives.push((i, j));
        }
    }
    ts
}

/// `p(i, j) = σ(zᵢ·zⱼ)` with `z = MLP₃(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgePredictor {
    pub mlp3: MlpParams,
}

impl EdgePredictor {
    pub fn init<R: Rng + ?Sized>(d_in: usize, cfg: &CleanConfig, rng: &mut R) -> Self {
        Self {
            mlp3: MlpParams::init(d_in, cfg.hidden_dim, cfg.embed_dim, rng),
        }
    }

    pub fn embed(&self, x: &FeatureMatrix) -> Result<DenseMatrix> {
        Ok(mlp_forward(&self.mlp3, x.matrix())?.1)
    }
}

impl ParamSet for EdgePredictor {
    fn buffers(&self) -> Vec<&[f64]> {
        self.mlp3.buffers()
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.mlp3.buffers_mut()
    }
}

/// Edge probability from precomputed predictor embeddings.
pub fn pair_probability(z: &DenseMatrix, i: NodeId, j: NodeId) -> f64 {
    sigmoid(dot(z.row(i), z.row(j)))
}

pub fn edge_probability(ep: &EdgePredictor, x: &FeatureMatrix, i: NodeId, j: NodeId) -> Result<f64> {
    Ok(pair_probability(&ep.embed(x)?, i, j))
}

/// Mean of `−log p` over positives plus mean of `−log(1 − p)` over
/// negatives, and its gradient.
pub fn edge_loss_and_grad(ep: &EdgePredictor, x: &FeatureMatrix, ts: &EdgeTrainingSet) -> Result<(f64, EdgePredictor)> {
    if ts.positives.is_empty() || ts.negatives.is_empty() {
        return Err(Error::DegenerateEdgeSet {
            positives: ts.positives.len(),
            negatives: ts.negatives.len(),
        });
    }
    let (hidden, z) = mlp_forward(&ep.mlp3, x.matrix())?;
    let mut dz = DenseMatrix::zeros(z.rows(), z.cols());
    let mut loss = 0.0;
    for (set, positive) in [(&ts.positives, true), (&ts.negatives, false)] {
        let inv = 1.0 / set.len() as f64;
        for &(i, j) in set.iter() {
            let s = dot(z.row(i), z.row(j));
            let (l, g) = if positive {
                (softplus(-s), sigmoid(s) - 1.0)
            } else {
                (softplus(s), sigmoid(s))
            };
            loss += inv * l;
            let g = inv * g;
            for c in 0..z.cols() {
                let (zi, zj) = (z.get(i, c), z.get(j, c));
                dz.row_mut(i)[c] += g * zj;
                dz.row_mut(j)[c] += g * zi;
            }
        }
    }
    let (grads, _) = mlp_backward(&ep.mlp3, x.matrix(), &hidden, &dz, false)?;
    Ok((loss, EdgePredictor { mlp3: grads }))
}

#[derive(Debug, Clone)]
pub struct EdgeTrainOutput {
    pub predictor: EdgePredictor,
    /// Loss before each step, followed by the final loss.
    pub loss_curve: Vec<f64>,
}

/// Trains an edge predictor from `init` (when given) or a fresh one seeded
/// by `seed`.
pub fn train_edge_predictor(
    x: &FeatureMatrix,
    ts: &EdgeTrainingSet,
    cfg: &CleanConfig,
    seed: u64,
    init: Option<&EdgePredictor>,
) -> Result<EdgeTrainOutput> {
    cfg.validate()?;
    if ts.positives.is_empty() || ts.negatives.is_empty() {
        return Err(Error::DegenerateEdgeSet {
            positives: ts.positives.len(),
            negatives: ts.negatives.len(),
        });
    }
    let mut ep = match init {
        Some(p) => p.clone(),
        None => EdgePredictor::init(x.dim(), cfg, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut opt = OptimizerState::new(cfg.optimizer, &ep);
    let mut loss_curve = Vec::with_capacity(cfg.edge_epochs + 1);
    for epoch in 0..cfg.edge_epochs {
        let (loss, grads) = edge_loss_and_grad(&ep, x, ts)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("edge loss at epoch {epoch}: {loss}")));
        }
        loss_curve.push(loss);
        adam_step(&mut ep, &grads, &mut opt)?;
    }
    if cfg.edge_epochs > 0 {
        loss_curve.push(edge_loss_and_grad(&ep, x, ts)?.0);
    }
    Ok(EdgeTrainOutput {
        predictor: ep,
        loss_curve,
    })
}

/// Replaces every edge weight of `graph` by the predicted clean probability.
/// Non-edges stay absent.
pub fn reweight_graph(graph: &WeightedGraph, ep: &EdgePredictor, x: &FeatureMatrix) -> Result<WeightedGraph> {
    let z = ep.embed(x)?;
    z.check_finite("edge predictor embeddings")?;
    graph.reweighted(|i, j| pair_probability(&z, i, j).clamp(EDGE_WEIGHT_MIN, 1.0 - EDGE_WEIGHT_MIN))
}

/// Feature similarity used by [`jaccard_preclean`]: Jaccard on 0/1 features,
/// cosine otherwise.
pub fn feature_similarity(x: &FeatureMatrix, binary: bool, i: NodeId, j: NodeId) -> f64 {
    if binary {
        let (a, b) = (x.row(i), x.row(j));
        let inter = a.iter().zip(b).filter(|(&u, &v)| u != 0.0 && v != 0.0).count();
        let union = a.iter().zip(b).filter(|(&u, &v)| u != 0.0 || v != 0.0).count();
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    } else {
        cosine(x.row(i), x.row(j))
    }
}

/// Sets the weight of every edge with feature similarity below `threshold`
/// to 0. Use [`WeightedGraph::pruned`] to drop them from the support.
pub fn jaccard_preclean(graph: &WeightedGraph, x: &FeatureMatrix, threshold: f64) -> Result<WeightedGraph> {
    let binary = x.is_binary();
    graph.reweighted(|i, j| {
        if feature_similarity(x, binary, i, j) < threshold {
            0.0
        } else {
            graph.weight(i, j)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, inject_random_interclass_edges, FeatureModel, SbmSpec};
    use crate::nn::grad_check;
    use proptest::prelude::*;

    fn feats(rows: &[&[f64]]) -> FeatureMatrix {
        FeatureMatrix::new(DenseMatrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn pseudo_label_examples() {
        let logits = DenseMatrix::from_rows(&[[10.0, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0], [0.0, 5.0, 0.0, 0.0]]).unwrap();
        let labels = LabelStore::new(vec![0, 3, 2]).unwrap();
        let pl = pseudo_labels(&logits, &[2], &labels).unwrap();
        assert_eq!(pl.label[0], 0);
        assert!(pl.confidence[0] > 0.9998);
        assert_eq!((pl.label[1], pl.confidence[1]), (0, 0.25));
        assert_eq!((pl.label[2], pl.confidence[2], pl.source[2]), (2, 1.0, LabelSource::Oracle));
        assert_eq!(pl.source[0], LabelSource::Model);
        assert!(pseudo_labels(&logits, &[], &LabelStore::new(vec![0, 1]).unwrap()).is_err());
    }

    fn manual(label: Vec<usize>, confidence: Vec<f64>) -> PseudoLabels {
        let n = label.len();
        PseudoLabels {
            label,
            confidence,
            source: vec![LabelSource::Model; n],
        }
    }

    #[test]
    fn edge_set_rules() {
        let g = WeightedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let pl = manual(vec![0, 0, 1, 1], vec![0.95, 0.95, 0.3, 0.5]);
        let ts = build_edge_training_set(&g, &pl, 0.9);
        assert_eq!(ts.positives, vec![(0, 1)]);
        assert_eq!(ts.negatives, vec![(1, 2)]);
        // (2, 3) shares a label but node 3 is below kappa: unused.
        let ts = build_edge_training_set(&g, &pl, 0.0);
        assert_eq!(ts.positives, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn probability_examples() {
        let cfg = CleanConfig {
            hidden_dim: 3,
            embed_dim: 2,
            ..CleanConfig::default()
        };
        let mut ep = EdgePredictor::init(2, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        let x = feats(&[&[1.0, 0.0], &[0.0, 1.0], &[0.3, -2.0]]);
        assert_eq!(edge_probability(&ep, &x, 0, 2).unwrap(), edge_probability(&ep, &x, 2, 0).unwrap());

        // Zero output layer with bias (b, 0): z = (b, 0) for every node.
        ep.mlp3.w_out = DenseMatrix::zeros(3, 2);
        ep.mlp3.b_out = vec![3f64.ln().sqrt(), 0.0];
        assert!((edge_probability(&ep, &x, 0, 1).unwrap() - 0.75).abs() < 1e-12);
        ep.mlp3.b_out = vec![0.0, 0.0];
        assert_eq!(edge_probability(&ep, &x, 0, 1).unwrap(), 0.5);
        let g = WeightedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let rw = reweight_graph(&g, &ep, &x).unwrap();
        assert_eq!(rw.edge_list(), g.edge_list());
        assert!(rw.edges().all(|(_, _, w)| w == 0.5));
        assert_eq!(rw.weight(0, 2), 0.0);
    }

    #[test]
    fn edge_loss_gradient_matches_finite_differences() {
        let x = feats(&[&[1.0, 0.0, 0.5], &[0.2, 1.0, 0.0], &[0.0, 0.3, 1.0], &[1.0, 1.0, 0.0], &[0.0, 0.0, 2.0]]);
        let ts = EdgeTrainingSet {
            positives: vec![(0, 1), (2, 4)],
            negatives: vec![(0, 4), (1, 3), (3, 4)],
        };
        let cfg = CleanConfig {
            hidden_dim: 5,
            embed_dim: 4,
            ..CleanConfig::default()
        };
        for seed in 0..3 {
            let ep = EdgePredictor::init(3, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let err = grad_check(
                |flat| {
                    let mut m = ep.clone();
                    m.assign_flat(flat).unwrap();
                    let (l, g) = edge_loss_and_grad(&m, &x, &ts).unwrap();
                    (l, g.to_flat())
                },
                &ep.to_flat(),
                1e-6,
                usize::MAX,
                seed,
            );
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn separable_fixture_trains_to_full_accuracy() {
        // Positives join nodes with identical features, negatives orthogonal ones.
        let x = feats(&[
            &[1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 1.0, 0.0],
            &[0.0, 0.0, 1.0],
            &[0.0, 0.0, 1.0],
        ]);
        let ts = EdgeTrainingSet {
            positives: vec![(0, 1), (2, 3), (4, 5)],
            negatives: vec![(0, 2), (1, 4), (3, 5), (0, 5)],
        };
        let cfg = CleanConfig {
            hidden_dim: 8,
            embed_dim: 8,
            edge_epochs: 200,
            ..CleanConfig::default()
        };
        let out = train_edge_predictor(&x, &ts, &cfg, 4, None).unwrap();
        assert!(out.loss_curve.last().unwrap() < &out.loss_curve[0]);
        let z = out.predictor.embed(&x).unwrap();
        assert!(ts.positives.iter().all(|&(i, j)| pair_probability(&z, i, j) > 0.5));
        assert!(ts.negatives.iter().all(|&(i, j)| pair_probability(&z, i, j) < 0.5));
    }

    #[test]
    fn degenerate_sets_and_zero_epochs() {
        let x = feats(&[&[1.0], &[2.0]]);
        let cfg = CleanConfig {
            edge_epochs: 0,
            hidden_dim: 2,
            embed_dim: 2,
            ..CleanConfig::default()
        };
        let empty = EdgeTrainingSet {
            positives: vec![(0, 1)],
            negatives: vec![],
        };
        assert!(matches!(
            train_edge_predictor(&x, &empty, &cfg, 0, None),
            Err(Error::DegenerateEdgeSet { positives: 1, negatives: 0 })
        ));
        let ts = EdgeTrainingSet {
            positives: vec![(0, 1)],
            negatives: vec![(0, 1)],
        };
        let init = EdgePredictor::init(1, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let out = train_edge_predictor(&x, &ts, &cfg, 9, Some(&init)).unwrap();
        assert_eq!(out.predictor, init);
    }

    /// Rank-sum AUC computed pair by pair.
    fn brute_auc(pos: &[f64], neg: &[f64]) -> f64 {
        let mut wins = 0.0;
        for p in pos {
            for n in neg {
                wins += if p > n {
                    1.0
                } else if p == n {
                    0.5
                } else {
                    0.0
                };
            }
        }
        wins / (pos.len() * neg.len()) as f64
    }

    #[test]
    fn oracle_pseudo_labels_separate_injected_edges() {
        let d = generate_sbm(&SbmSpec {
            classes: 4,
            nodes_per_class: 50,
            p_in: 0.08,
            p_out: 0.0,
            feature_dim: 16,
            features: FeatureModel::Gaussian { noise: 1.0 },
            seed: 21,
        })
        .unwrap();
        let noisy = inject_random_interclass_edges(&d.graph, &d.labels, 1.0, 3).unwrap();
        let everyone: Vec<NodeId> = (0..d.num_nodes()).collect();
        let logits = DenseMatrix::zeros(d.num_nodes(), 4);
        let pl = pseudo_labels(&logits, &everyone, &d.labels).unwrap();
        let ts = build_edge_training_set(&noisy.graph, &pl, 0.0);
        assert_eq!(ts.negatives, noisy.added);
        let cfg = CleanConfig::default();
        let ep = train_edge_predictor(&d.features, &ts, &cfg, 0, None).unwrap().predictor;
        let rw = reweight_graph(&noisy.graph, &ep, &d.features).unwrap();
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (i, j, w) in rw.edges() {
            if noisy.added.binary_search(&(i, j)).is_ok() {
                neg.push(w);
            } else {
                pos.push(w);
            }
        }
        let auc = brute_auc(&pos, &neg);
        assert!(auc > 0.95, "auc {auc}");
    }

    #[test]
    fn preclean_examples() {
        let x = feats(&[&[1.0, 0.0, 1.0], &[0.0, 1.0, 0.0], &[1.0, 0.0, 1.0], &[1.0, 1.0, 0.0]]);
        let g = WeightedGraph::from_edges(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let out = jaccard_preclean(&g, &x, 0.01).unwrap();
        assert_eq!(out.weight(0, 1), 0.0);
        assert_eq!(out.weight(0, 2), 1.0);
        assert_eq!(out.weight(0, 3), 1.0);
        assert_eq!(out.pruned().num_edges(), 2);
        assert_eq!(jaccard_preclean(&g, &x, 0.0).unwrap(), g);
        assert_eq!(jaccard_preclean(&g, &x, 1.0).unwrap().weight(0, 2), 1.0);
        // Jaccard(0, 3) = 1/3.
        assert_eq!(jaccard_preclean(&g, &x, 0.34).unwrap().weight(0, 3), 0.0);

        let xc = feats(&[&[0.5, -1.0], &[0.5, -1.0], &[-0.5, 1.0]]);
        let g = WeightedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let out = jaccard_preclean(&g, &xc, 0.9).unwrap();
        assert_eq!((out.weight(0, 1), out.weight(1, 2)), (1.0, 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn edge_sets_disjoint_and_weights_valid(
            labels in prop::collection::vec(0usize..3, 8),
            conf in prop::collection::vec(0.0f64..1.0, 8),
            kappa in 0.0f64..1.0,
            seed in 0u64..500,
        ) {
            let g = WeightedGraph::from_edges(8, (0..8).flat_map(|i| (i + 1..8).map(move |j| (i, j))).filter(|&(i, j)| (i * 3 + j) % 4 != 0)).unwrap();
            let ts = build_edge_training_set(&g, &manual(labels, conf), kappa);
            prop_assert!(ts.positives.iter().all(|e| !ts.negatives.contains(e)));
            prop_assert!(ts.positives.iter().chain(&ts.negatives).all(|&(i, j)| g.has_edge(i, j)));

            let cfg = CleanConfig { hidden_dim: 4, embed_dim: 3, ..CleanConfig::default() };
            let x = FeatureMatrix::new(DenseMatrix::new(8, 2, (0..16).map(|k| ((k * 7 + seed as usize) % 5) as f64 - 2.0).collect()).unwrap()).unwrap();
            let ep = EdgePredictor::init(2, &cfg, &mut ChaCha8Rng::seed_from_u64(seed));
            let rw = reweight_graph(&g, &ep, &x).unwrap();
            prop_assert_eq!(rw.edge_list(), g.edge_list());
            for (i, j, w) in rw.edges() {
                prop_assert!(w > 0.0 && w < 1.0);
                prop_assert_eq!(rw.weight(j, i), w);
            }
        }
    }
}
