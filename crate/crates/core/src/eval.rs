//! Two-layer GCN used to score a labeled set and graph.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, LabelStore, NodeId, WeightedGraph};
use crate::nn::{
    adam_step, cross_entropy, glorot_uniform, softmax_cross_entropy_grad, softmax_rows, AdamConfig, DenseMatrix,
    OptimizerState, ParamSet,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnConfig {
    pub hidden_dim: usize,
    /// Use [`GcnConfig::WIDE_HIDDEN`] hidden units instead of `hidden_dim`.
    pub wide_hidden: bool,
    pub max_epochs: usize,
    pub patience: usize,
    /// Dropout on the hidden layer during training.
    pub dropout: f64,
    pub optimizer: AdamConfig,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            wide_hidden: false,
            max_epochs: 300,
            patience: 30,
            dropout: 0.5,
            optimizer: AdamConfig::default(),
        }
    }
}

impl GcnConfig {
    pub const WIDE_HIDDEN: usize = 128;

    pub fn hidden(&self) -> usize {
        if self.wide_hidden {
            Self::WIDE_HIDDEN
        } else {
            self.hidden_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden() == 0 {
            return Err(Error::InvalidArgument("GCN hidden width must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` with weighted degrees, stored row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    rows: Vec<Vec<(NodeId, f64)>>,
}

impl NormalizedAdjacency {
    pub fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: NodeId) -> &[(NodeId, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.rows[i].iter().find(|&&(k, _)| k == j).map_or(0.0, |&(_, v)| v)
    }

    /// `Ā · m`.
    pub fn propagate(&self, m: &DenseMatrix) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(m.rows(), m.cols());
        for (i, row) in self.rows.iter().enumerate() {
            let dst = out.row_mut(i);
            for &(j, a) in row {
                for (d, s) in dst.iter_mut().zip(m.row(j)) {
                    *d += a * s;
                }
            }
        }
        out
    }
}

pub fn normalize_adjacency(g: &WeightedGraph) -> NormalizedAdjacency {
    let n = g.num_nodes();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / (1.0 + g.weighted_degree(i)).sqrt()).collect();
    let rows = (0..n)
        .map(|i| {
            let mut row: Vec<(NodeId, f64)> = g
                .neighbors(i)
                .iter()
                .filter(|&&(_, w)| w > 0.0)
                .map(|&(j, w)| (j, w * (inv_sqrt[i] * inv_sqrt[j])))
                .collect();
            row.push((i, inv_sqrt[i] * inv_sqrt[i]));
            row.sort_by_key(|e| e.0);
            row
        })
        .collect();
    NormalizedAdjacency { rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    /// `d × hidden`
    pub w0: DenseMatrix,
    /// `hidden × C`
    pub w1: DenseMatrix,
}

impl GcnParams {
    pub fn init<R: Rng + ?Sized>(d_in: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let mut w0 = DenseMatrix::zeros(d_in, hidden);
        let mut w1 = DenseMatrix::zeros(hidden, classes);
        glorot_uniform(&mut w0, rng);
        glorot_uniform(&mut w1, rng);
        Self { w0, w1 }
    }
}

impl ParamSet for GcnParams {
    fn buffers(&self) -> Vec<&[f64]> {
        vec![self.w0.as_slice(), self.w1.as_slice()]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w0.as_mut_slice(), self.w1.as_mut_slice()]
    }
}

struct Forward {
    pre: DenseMatrix,
    hidden: DenseMatrix,
    logits: DenseMatrix,
}

/// `Ā · (mask ⊙ relu(Ā X W0)) · W1`; `mask` already includes the dropout rescale.
fn forward(p: &GcnParams, adj: &NormalizedAdjacency, x: &FeatureMatrix, mask: Option<&DenseMatrix>) -> Result<Forward> {
    let pre = adj.propagate(&x.matrix().matmul(&p.w0)?);
    let mut hidden = pre.clone();
    hidden.map_inplace(|v| v.max(0.0));
    if let Some(m) = mask {
        for (h, k) in hidden.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *h *= k;
        }
    }
    let logits = adj.propagate(&hidden.matmul(&p.w1)?);
    Ok(Forward { pre, hidden, logits })
}

/// Logits for every node, without dropout.
pub fn gcn_logits(p: &GcnParams, adj: &NormalizedAdjacency, x: &FeatureMatrix) -> Result<DenseMatrix> {
    Ok(forward(p, adj, x, None)?.logits)
}

/// Mean cross-entropy over `labeled` and its gradient. `mask` is a
/// pre-scaled dropout mask over the hidden layer.
pub fn gcn_loss_and_grad(
    p: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &FeatureMatrix,
    labeled: &[NodeId],
    labels: &LabelStore,
    mask: Option<&DenseMatrix>,
) -> Result<(f64, GcnParams)> {
    let f = forward(p, adj, x, mask)?;
    let probs = softmax_rows(&f.logits.select_rows(labeled));
    let targets: Vec<usize> = labeled.iter().map(|&i| labels.get(i)).collect();
    let loss = cross_entropy(&probs, &targets)?;
    let d_lab = softmax_cross_entropy_grad(&probs, &targets)?;
    let mut d_logits = DenseMatrix::zeros(f.logits.rows(), f.logits.cols());
    for (r, &i) in labeled.iter().enumerate() {
        for (d, g) in d_logits.row_mut(i).iter_mut().zip(d_lab.row(r)) {
            *d += g;
        }
    }
    // Ā is symmetric, so Āᵀ·g = Ā·g.
    let d_p = adj.propagate(&d_logits);
    let w1 = f.hidden.t_matmul(&d_p)?;
    let mut d_hidden = d_p.matmul_t(&p.w1)?;
    for (idx, d) in d_hidden.as_mut_slice().iter_mut().enumerate() {
        let m = mask.map_or(1.0, |m| m.as_slice()[idx]);
        if f.pre.as_slice()[idx] <= 0.0 {
            *d = 0.0;
        } else {
            *d *= m;
        }
    }
    let d_xw = adj.propagate(&d_hidden);
    let w0 = x.matrix().t_matmul(&d_xw)?;
    Ok((loss, GcnParams { w0, w1 }))
}

#[derive(Debug, Clone)]
pub struct GcnOutput {
    /// Parameters from the epoch with the best validation accuracy.
    pub params: GcnParams,
    /// Training loss of every epoch that ran.
    pub loss_curve: Vec<f64>,
    /// Index into `loss_curve` of the returned parameters' epoch, `None` if
    /// no epoch ran.
    pub best_epoch: Option<usize>,
    pub best_valid_accuracy: Option<f64>,
}

/// Full-batch training with early stopping on validation accuracy.
///
/// Ties in validation accuracy go to the lower validation loss. With an
/// empty `valid` set the final parameters are returned.
pub fn train_gcn(
    g: &WeightedGraph,
    x: &FeatureMatrix,
    labeled: &[NodeId],
    labels: &LabelStore,
    valid: &[NodeId],
    cfg: &GcnConfig,
    seed: u64,
) -> Result<GcnOutput> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("GCN training needs labeled nodes".into()));
    }
    let adj = normalize_adjacency(g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = cfg.hidden();
    let mut params = GcnParams::init(x.dim(), hidden, labels.num_classes(), &mut rng);
    let mut opt = OptimizerState::new(cfg.optimizer, &params);
    let valid_targets: Vec<usize> = valid.iter().map(|&i| labels.get(i)).collect();

    let mut best: Option<(f64, f64, usize, GcnParams)> = None;
    let mut loss_curve = Vec::new();
    let keep = 1.0 - cfg.dropout;
    for epoch in 0..cfg.max_epochs {
        let mask = (cfg.dropout > 0.0).then(|| {
            let data = (0..x.num_nodes() * hidden)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            DenseMatrix::new(x.num_nodes(), hidden, data).expect("mask shape")
        });
        let (loss, grads) = gcn_loss_and_grad(&params, &adj, x, labeled, labels, mask.as_ref())?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("GCN loss at epoch {epoch}: {loss}")));
        }
        loss_curve.push(loss);
        adam_step(&mut params, &grads, &mut opt)?;

        if valid.is_empty() {
            continue;
        }
        let logits = gcn_logits(&params, &adj, x)?.select_rows(valid);
        let probs = softmax_rows(&logits);
        let acc = accuracy(&logits, &valid_targets);
        let vloss = cross_entropy(&probs, &valid_targets)?;
        let improved = best
            .as_ref()
            .map_or(true, |&(ba, bl, _, _)| acc > ba || (acc == ba && vloss < bl));
        if improved {
            best = Some((acc, vloss, epoch, params.clone()));
        } else if epoch - best.as_ref().map_or(0, |b| b.2) >= cfg.patience {
            break;
        }
    }

    Ok(match best {
        Some((acc, _, epoch, p)) => GcnOutput {
            params: p,
            loss_curve,
            best_epoch: Some(epoch),
            best_valid_accuracy: Some(acc),
        },
        None => GcnOutput {
            params,
            best_epoch: loss_curve.len().checked_sub(1),
            loss_curve,
            best_valid_accuracy: None,
        },
    })
}

fn accuracy(logits: &DenseMatrix, targets: &[usize]) -> f64 {
    let hits = (0..logits.rows()).filter(|&r| logits.row_argmax(r) == targets[r]).count();
    hits as f64 / targets.len() as f64
}

/// Fraction of `nodes` whose argmax prediction matches the true label.
pub fn evaluate(p: &GcnParams, g: &WeightedGraph, x: &FeatureMatrix, nodes: &[NodeId], labels: &LabelStore) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("cannot evaluate on an empty node set".into()));
    }
    let logits = gcn_logits(p, &normalize_adjacency(g), x)?.select_rows(nodes);
    let targets: Vec<usize> = nodes.iter().map(|&i| labels.get(i)).collect();
    Ok(accuracy(&logits, &targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, make_splits, Dataset, FeatureModel, SbmSpec};
    use crate::nn::{grad_check, mlp_forward, Activation, MlpParams};
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        let a = normalize_adjacency(&WeightedGraph::empty(1));
        assert_eq!(a.row(0), &[(0, 1.0)]);

        // [[1,1],[1,1]] scaled by 1/2 on both sides.
        let a = normalize_adjacency(&WeightedGraph::from_edges(2, [(0, 1)]).unwrap());
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.get(i, j) - 0.5).abs() < 1e-15);
            }
        }

        let g = WeightedGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let a = normalize_adjacency(&g.reweighted(|_, _| 0.0).unwrap());
        for i in 0..4 {
            assert_eq!(a.row(i), &[(i, 1.0)]);
        }
    }

    #[test]
    fn weighted_normalization_matches_dense_formula() {
        let g = WeightedGraph::from_weighted_edges(3, [(0, 1, 0.5), (1, 2, 0.25)]).unwrap();
        let a = normalize_adjacency(&g);
        let dense = [[1.0, 0.5, 0.0], [0.5, 1.0, 0.25], [0.0, 0.25, 1.0]];
        let deg: Vec<f64> = dense.iter().map(|r| r.iter().sum()).collect();
        for i in 0..3 {
            for j in 0..3 {
                let expect = dense[i][j] / (deg[i] * deg[j]).sqrt();
                assert!((a.get(i, j) - expect).abs() < 1e-15);
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    fn small_fixture() -> Dataset {
        generate_sbm(&SbmSpec {
            classes: 3,
            nodes_per_class: 4,
            p_in: 0.7,
            p_out: 0.1,
            feature_dim: 5,
            features: FeatureModel::Gaussian { noise: 0.8 },
            seed: 4,
        })
        .unwrap()
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let d = small_fixture();
        let g = d.graph.reweighted(|i, j| 0.1 + 0.8 * (((i + 2 * j) % 7) as f64 / 6.0)).unwrap();
        let adj = normalize_adjacency(&g);
        let labeled = [0, 2, 5, 7, 11];
        for seed in 0..3 {
            let p = GcnParams::init(5, 6, 3, &mut ChaCha8Rng::seed_from_u64(seed));
            let mask = DenseMatrix::new(12, 6, (0..72).map(|k| if k % 3 == 0 { 0.0 } else { 1.5 }).collect()).unwrap();
            for m in [None, Some(&mask)] {
                let err = grad_check(
                    |flat| {
                        let mut q = p.clone();
                        q.assign_flat(flat).unwrap();
                        let (l, gr) = gcn_loss_and_grad(&q, &adj, &d.features, &labeled, &d.labels, m).unwrap();
                        (l, gr.to_flat())
                    },
                    &p.to_flat(),
                    1e-5,
                    usize::MAX,
                    seed,
                );
                assert!(err < 1e-4, "seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let d = small_fixture();
        let cfg = GcnConfig {
            max_epochs: 0,
            ..GcnConfig::default()
        };
        let out = train_gcn(&d.graph, &d.features, &[0, 1], &d.labels, &[2], &cfg, 8).unwrap();
        let init = GcnParams::init(5, 16, 3, &mut ChaCha8Rng::seed_from_u64(8));
        assert_eq!(out.params, init);
        assert!(out.loss_curve.is_empty());
    }

    #[test]
    fn overfits_a_ten_node_fixture() {
        let d = generate_sbm(&SbmSpec {
            classes: 2,
            nodes_per_class: 5,
            p_in: 0.5,
            p_out: 0.1,
            feature_dim: 6,
            features: FeatureModel::Gaussian { noise: 1.0 },
            seed: 1,
        })
        .unwrap();
        let cfg = GcnConfig {
            dropout: 0.0,
            max_epochs: 200,
            ..GcnConfig::default()
        };
        let train: Vec<NodeId> = (0..10).collect();
        let out = train_gcn(&d.graph, &d.features, &train, &d.labels, &[], &cfg, 0).unwrap();
        assert_eq!(evaluate(&out.params, &d.graph, &d.features, &train, &d.labels).unwrap(), 1.0);
        let single = evaluate(&out.params, &d.graph, &d.features, &[3], &d.labels).unwrap();
        assert!(single == 0.0 || single == 1.0);
        assert!(evaluate(&out.params, &d.graph, &d.features, &[], &d.labels).is_err());
    }

    #[test]
    fn separable_sbm_reaches_high_accuracy() {
        let d = generate_sbm(&SbmSpec {
            classes: 4,
            nodes_per_class: 100,
            p_in: 0.05,
            p_out: 0.002,
            feature_dim: 16,
            features: FeatureModel::Gaussian { noise: 2.0 },
            seed: 13,
        })
        .unwrap();
        let s = make_splits(&d.labels, 0, 20, 160).unwrap();
        let out = train_gcn(&d.graph, &d.features, &s.initial, &d.labels, &s.valid, &GcnConfig::default(), 0).unwrap();
        let acc = evaluate(&out.params, &d.graph, &d.features, &s.test, &d.labels).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
        let best = out.best_epoch.unwrap();
        assert!(out.loss_curve[best] < out.loss_curve[0]);
    }

    #[test]
    fn untrained_model_is_near_chance() {
        let d = generate_sbm(&SbmSpec {
            classes: 4,
            nodes_per_class: 250,
            p_in: 0.01,
            p_out: 0.002,
            feature_dim: 8,
            features: FeatureModel::Gaussian { noise: 1.0 },
            seed: 2,
        })
        .unwrap();
        let all: Vec<NodeId> = (0..1000).collect();
        let mut total = 0.0;
        for seed in 0..10 {
            let p = GcnParams::init(8, 16, 4, &mut ChaCha8Rng::seed_from_u64(seed));
            total += evaluate(&p, &d.graph, &d.features, &all, &d.labels).unwrap();
        }
        assert!((total / 10.0 - 0.25).abs() < 0.1, "{}", total / 10.0);
    }

    #[test]
    fn edgeless_graph_reduces_to_mlp() {
        let d = small_fixture();
        let empty = d.graph.reweighted(|_, _| 0.0).unwrap();
        let p = GcnParams::init(5, 7, 3, &mut ChaCha8Rng::seed_from_u64(3));
        let gcn = gcn_logits(&p, &normalize_adjacency(&empty), &d.features).unwrap();
        let mlp = MlpParams {
            w_in: p.w0.clone(),
            b_in: vec![0.0; 7],
            w_out: p.w1.clone(),
            b_out: vec![0.0; 3],
            activation: Activation::Relu,
        };
        let (_, out) = mlp_forward(&mlp, d.features.matrix()).unwrap();
        assert_eq!(gcn, out);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn normalization_is_symmetric_and_finite(weights in prop::collection::vec(0.0f64..=1.0, 10)) {
            let pairs = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (1, 5), (0, 5), (2, 4), (3, 5)];
            let g = WeightedGraph::from_weighted_edges(6, pairs.iter().zip(&weights).map(|(&(i, j), &w)| (i, j, w))).unwrap();
            let a = normalize_adjacency(&g);
            for i in 0..6 {
                prop_assert!(a.get(i, i) > 0.0);
                for j in 0..6 {
                    prop_assert!(a.get(i, j).is_finite());
                    prop_assert_eq!(a.get(i, j), a.get(j, i));
                }
            }
        }

        #[test]
        fn accuracy_invariant_to_node_permutation(shift in 1usize..12, seed in 0u64..100) {
            let d = small_fixture();
            let n = d.num_nodes();
            let perm: Vec<usize> = (0..n).map(|i| (i * 5 + shift) % n).collect();
            let inv = {
                let mut v = vec![0; n];
                for (i, &p) in perm.iter().enumerate() { v[p] = i; }
                v
            };
            let g2 = WeightedGraph::from_edges(n, d.graph.edges().map(|(i, j, _)| (perm[i], perm[j]))).unwrap();
            let x2 = FeatureMatrix::new(d.features.matrix().select_rows(&inv)).unwrap();
            let l2 = LabelStore::with_classes(inv.iter().map(|&i| d.labels.get(i)).collect(), 3).unwrap();
            let p = GcnParams::init(5, 4, 3, &mut ChaCha8Rng::seed_from_u64(seed));
            let nodes = [0, 3, 4, 8, 10];
            let mapped: Vec<NodeId> = nodes.iter().map(|&i| perm[i]).collect();
            let a = evaluate(&p, &d.graph, &d.features, &nodes, &d.labels).unwrap();
            let b = evaluate(&p, &g2, &x2, &mapped, &l2).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
