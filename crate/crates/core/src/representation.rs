//! Node representation learning.
//!
//! Embeddings come from a feature-only MLP (`E = MLP₁(X)`) and class logits
//! from a second MLP on top (`p = MLP₂(E)`). The objective decouples label
//! and structure information:
//!
//! ```text
//! L = CE(labeled) + α · L_g
//! L_g = −Σᵢ log( Σⱼ Aᵢⱼ exp(cos(Eᵢ,Eⱼ)/τ) / Σ_{m∈M(i)} exp(cos(Eᵢ,Eₘ)/τ) )
//! ```
//!
//! so a fully unreliable graph can be switched off with `α = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureMatrix, LabelStore, NodeId, WeightedGraph};
use crate::nn::{
    adam_step, cross_entropy, dot, mlp_backward, mlp_forward, softmax_cross_entropy_grad, softmax_rows, AdamConfig,
    DenseMatrix, MlpParams, OptimizerState, ParamSet, PROB_FLOOR,
};

/// Graphs up to this size use every other node as a negative.
pub const FULL_NEGATIVES_MAX_NODES: usize = 5000;
pub const DEFAULT_NEGATIVES_PER_NODE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSampling {
    /// All nodes when `N <= 5000`, else 256 uniform samples per node.
    #[default]
    Auto,
    All,
    /// Uniform samples per node, redrawn every epoch.
    PerNode(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReprConfig {
    pub alpha: f64,
    pub tau: f64,
    pub negatives: NegativeSampling,
    pub epochs: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Continue from the previous iteration's parameters.
    pub warm_start: bool,
    pub optimizer: AdamConfig,
}

impl Default for ReprConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            tau: 0.5,
            negatives: NegativeSampling::Auto,
            epochs: 200,
            hidden_dim: 64,
            embed_dim: 64,
            warm_start: true,
            optimizer: AdamConfig::default(),
        }
    }
}

impl ReprConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {}", self.tau)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument("hidden_dim and embed_dim must be >= 1".into()));
        }
        Ok(())
    }
}

/// `mlp1`: features → embeddings, `mlp2`: embeddings → class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ReprModel {
    pub mlp1: MlpParams,
    pub mlp2: MlpParams,
}

impl ReprModel {
    pub fn init<R: Rng + ?Sized>(d_in: usize, cfg: &ReprConfig, num_classes: usize, rng: &mut R) -> Self {
        Self {
            mlp1: MlpParams::init(d_in, cfg.hidden_dim, cfg.embed_dim, rng),
            mlp2: MlpParams::init(cfg.embed_dim, cfg.hidden_dim, num_classes, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            mlp1: self.mlp1.zeros_like(),
            mlp2: self.mlp2.zeros_like(),
        }
    }

    /// Embeddings and logits for every node.
    pub fn forward(&self, x: &FeatureMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
        let (_, embeds) = mlp_forward(&self.mlp1, x.matrix())?;
        let (_, logits) = mlp_forward(&self.mlp2, &embeds)?;
        Ok((embeds, logits))
    }
}

impl ParamSet for ReprModel {
    fn buffers(&self) -> Vec<&[f64]> {
        let mut b = self.mlp1.buffers();
        b.extend(self.mlp2.buffers());
        b
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.mlp1.buffers_mut();
        b.extend(self.mlp2.buffers_mut());
        b
    }
}

/// Negative sets `M(i)` for the contrastive term.
#[derive(Debug, Clone, PartialEq)]
pub enum NegativeSets {
    /// Every node except the anchor itself.
    AllButAnchor,
    /// Explicit per-node lists (may repeat nodes).
    Explicit(Vec<Vec<NodeId>>),
}

/// Mean cross-entropy of the softmaxed logits over `labeled`.
pub fn classification_loss(model: &ReprModel, x: &FeatureMatrix, labeled: &[NodeId], labels: &LabelStore) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("classification loss needs labeled nodes".into()));
    }
    let (_, logits) = model.forward(x)?;
    let probs = softmax_rows(&logits.select_rows(labeled));
    let targets: Vec<usize> = labeled.iter().map(|&i| labels.get(i)).collect();
    cross_entropy(&probs, &targets)
}

/// Weighted neighborhood-contrastive loss, summed over nodes with positive
/// weighted degree. Nodes with no positive-weight neighbor are skipped.
pub fn contrastive_loss(embeds: &DenseMatrix, graph: &WeightedGraph, tau: f64, negatives: &NegativeSets) -> Result<f64> {
    Ok(contrastive_loss_and_grad(embeds, graph, tau, negatives)?.loss)
}

#[derive(Debug, Clone)]
pub struct ContrastiveTerm {
    /// Sum over contributing nodes.
    pub loss: f64,
    /// `∂loss/∂embeds`.
    pub grad: DenseMatrix,
    /// Number of nodes that contributed a term.
    pub contributing: usize,
}

pub fn contrastive_loss_and_grad(
    embeds: &DenseMatrix,
    graph: &WeightedGraph,
    tau: f64,
    negatives: &NegativeSets,
) -> Result<ContrastiveTerm> {
    let n = embeds.rows();
    if graph.num_nodes() != n {
        return Err(Error::Shape {
            op: "contrastive_loss",
            expected: format!("{} embedding rows", graph.num_nodes()),
            actual: n.to_string(),
        });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
    }
    if let NegativeSets::Explicit(sets) = negatives {
        if sets.len() != n {
            return Err(Error::Shape {
                op: "contrastive_loss",
                expected: format!("{n} negative sets"),
                actual: sets.len().to_string(),
            });
        }
    }

    let k = embeds.cols();
    let mut unit = embeds.clone();
    let mut norms = vec![0.0; n];
    for (i, norm) in norms.iter_mut().enumerate() {
        let row = unit.row_mut(i);
        let nn = dot(row, row).sqrt();
        *norm = nn;
        for v in row.iter_mut() {
            *v = if nn > 0.0 { *v / nn } else { 0.0 };
        }
    }

    let inv_tau = 1.0 / tau;
    // exp((cos − 1)/τ): shifting by the maximum possible cosine keeps every
    // exponent ≤ 0 and cancels in the ratio.
    let shifted = |c: f64| ((c - 1.0) * inv_tau).exp();

    let mut loss = 0.0;
    let mut contributing = 0;
    let mut d_unit = DenseMatrix::zeros(n, k);

    match negatives {
        NegativeSets::AllButAnchor => {
            let cos = unit.matmul_t(&unit)?;
            // coef[i][j] = ∂loss/∂cos(i, j) for the anchor-i term.
            let mut coef = DenseMatrix::zeros(n, n);
            for i in 0..n {
                let nbrs = graph.neighbors(i);
                if !nbrs.iter().any(|&(_, w)| w > 0.0) {
                    continue;
                }
                let crow = cos.row(i);
                let num: f64 = nbrs.iter().map(|&(j, w)| w * shifted(crow[j])).sum();
                let den: f64 = (0..n).filter(|&m| m != i).map(|m| shifted(crow[m])).sum();
                if den <= 0.0 {
                    continue;
                }
                contributing += 1;
                let ratio = num / den;
                if ratio < PROB_FLOOR {
                    loss -= PROB_FLOOR.ln();
                    continue;
                }
                loss += den.ln() - num.ln();
                let g = coef.row_mut(i);
                for &(j, w) in nbrs {
                    g[j] -= w * shifted(crow[j]) * inv_tau / num;
                }
                for m in (0..n).filter(|&m| m != i) {
                    g[m] += shifted(crow[m]) * inv_tau / den;
                }
            }
            // cos(i, j) = uᵢ·uⱼ, so ∂/∂U = (G + Gᵀ)·U.
            let sym = {
                let mut s = coef.transpose();
                s.add_assign(&coef)?;
                s
            };
            d_unit = sym.matmul(&unit)?;
        }
        NegativeSets::Explicit(sets) => {
            for i in 0..n {
                let nbrs = graph.neighbors(i);
                if !nbrs.iter().any(|&(_, w)| w > 0.0) || sets[i].is_empty() {
                    continue;
                }
                let ui = unit.row(i).to_vec();
                let pos: Vec<(NodeId, f64, f64)> = nbrs
                    .iter()
                    .map(|&(j, w)| (j, w, shifted(dot(&ui, unit.row(j)))))
                    .collect();
                let neg: Vec<(NodeId, f64)> = sets[i].iter().map(|&m| (m, shifted(dot(&ui, unit.row(m))))).collect();
                let num: f64 = pos.iter().map(|&(_, w, e)| w * e).sum();
                let den: f64 = neg.iter().map(|&(_, e)| e).sum();
                contributing += 1;
                let ratio = num / den;
                if ratio < PROB_FLOOR {
                    loss -= PROB_FLOOR.ln();
                    continue;
                }
                loss += den.ln() - num.ln();
                let mut pairs: Vec<(NodeId, f64)> = pos.iter().map(|&(j, w, e)| (j, -w * e * inv_tau / num)).collect();
                pairs.extend(neg.iter().map(|&(m, e)| (m, e * inv_tau / den)));
                for (j, g) in pairs {
                    for c in 0..k {
                        let (uic, ujc) = (ui[c], unit.get(j, c));
                        d_unit.row_mut(i)[c] += g * ujc;
                        d_unit.row_mut(j)[c] += g * uic;
                    }
                }
            }
        }
    }

    // Back through the row normalization u = e/‖e‖.
    let mut grad = DenseMatrix::zeros(n, k);
    for i in 0..n {
        if norms[i] == 0.0 {
            continue;
        }
        let u = unit.row(i);
        let du = d_unit.row(i);
        let proj = dot(du, u);
        for (g, (&d, &uc)) in grad.row_mut(i).iter_mut().zip(du.iter().zip(u)) {
            *g = (d - proj * uc) / norms[i];
        }
    }
    Ok(ContrastiveTerm {
        loss,
        grad,
        contributing,
    })
}

/// Draws the negative sets for one epoch according to `sampling`.
pub fn draw_negatives<R: Rng + ?Sized>(num_nodes: usize, sampling: NegativeSampling, rng: &mut R) -> NegativeSets {
    let per_node = match sampling {
        NegativeSampling::All => return NegativeSets::AllButAnchor,
        NegativeSampling::Auto if num_nodes <= FULL_NEGATIVES_MAX_NODES => return NegativeSets::AllButAnchor,
        NegativeSampling::Auto => DEFAULT_NEGATIVES_PER_NODE,
        NegativeSampling::PerNode(k) => k,
    };
    if num_nodes < 2 {
        return NegativeSets::Explicit(vec![Vec::new(); num_nodes]);
    }
    NegativeSets::Explicit(
        (0..num_nodes)
            .map(|i| {
                (0..per_node)
                    .map(|_| {
                        // Uniform over the other N−1 nodes.
                        let m = rng.random_range(0..num_nodes - 1);
                        if m >= i {
                            m + 1
                        } else {
                            m
                        }
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Training objective and its gradient for one full batch.
///
/// The contrastive sum is averaged over contributing nodes so `α` weighs two
/// per-node means against each other.
pub fn objective_and_grad(
    model: &ReprModel,
    x: &FeatureMatrix,
    graph: &WeightedGraph,
    labeled: &[NodeId],
    labels: &LabelStore,
    alpha: f64,
    tau: f64,
    negatives: &NegativeSets,
) -> Result<(f64, ReprModel)> {
    let (h1, embeds) = mlp_forward(&model.mlp1, x.matrix())?;
    let e_lab = embeds.select_rows(labeled);
    let (h2, logits) = mlp_forward(&model.mlp2, &e_lab)?;
    let probs = softmax_rows(&logits);
    let targets: Vec<usize> = labeled.iter().map(|&i| labels.get(i)).collect();
    let mut loss = cross_entropy(&probs, &targets)?;
    let d_logits = softmax_cross_entropy_grad(&probs, &targets)?;
    let (g2, d_e_lab) = mlp_backward(&model.mlp2, &e_lab, &h2, &d_logits, true)?;

    let mut d_embeds = DenseMatrix::zeros(embeds.rows(), embeds.cols());
    let d_e_lab = d_e_lab.expect("input gradient requested");
    for (r, &i) in labeled.iter().enumerate() {
        for (d, g) in d_embeds.row_mut(i).iter_mut().zip(d_e_lab.row(r)) {
            *d += g;
        }
    }

    if alpha > 0.0 {
        let term = contrastive_loss_and_grad(&embeds, graph, tau, negatives)?;
        if term.contributing > 0 {
            let scale = alpha / term.contributing as f64;
            loss += scale * term.loss;
            for (d, g) in d_embeds.as_mut_slice().iter_mut().zip(term.grad.as_slice()) {
                *d += scale * g;
            }
        }
    }

    let (g1, _) = mlp_backward(&model.mlp1, x.matrix(), &h1, &d_embeds, false)?;
    Ok((loss, ReprModel { mlp1: g1, mlp2: g2 }))
}

#[derive(Debug, Clone)]
pub struct ReprOutput {
    pub model: ReprModel,
    /// `E`, one row per node.
    pub embeddings: DenseMatrix,
    /// Class logits for every node.
    pub logits: DenseMatrix,
    /// Objective before each optimizer step, followed by the final value.
    pub loss_curve: Vec<f64>,
}

/// Runs `cfg.epochs` full-batch optimizer steps on the objective.
///
/// Starts from `init` when given and `cfg.warm_start` is set, otherwise from
/// a fresh initialization drawn from `seed`.
pub fn train_representation(
    x: &FeatureMatrix,
    graph: &WeightedGraph,
    labeled: &[NodeId],
    labels: &LabelStore,
    cfg: &ReprConfig,
    init: Option<&ReprModel>,
    seed: u64,
) -> Result<ReprOutput> {
    cfg.validate()?;
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("representation training needs labeled nodes".into()));
    }
    if x.num_nodes() != graph.num_nodes() || labels.len() != graph.num_nodes() {
        return Err(Error::Shape {
            op: "train_representation",
            expected: format!("{} nodes", graph.num_nodes()),
            actual: format!("{} feature rows, {} labels", x.num_nodes(), labels.len()),
        });
    }

    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut neg_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut model = match init {
        Some(m) if cfg.warm_start => m.clone(),
        _ => ReprModel::init(x.dim(), cfg, labels.num_classes(), &mut init_rng),
    };
    let mut opt = OptimizerState::new(cfg.optimizer, &model);
    let mut loss_curve = Vec::with_capacity(cfg.epochs + 1);
    let n = graph.num_nodes();

    for epoch in 0..cfg.epochs {
        let negatives = if cfg.alpha > 0.0 {
            draw_negatives(n, cfg.negatives, &mut neg_rng)
        } else {
            NegativeSets::AllButAnchor
        };
        let (loss, grads) = objective_and_grad(&model, x, graph, labeled, labels, cfg.alpha, cfg.tau, &negatives)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("representation loss at epoch {epoch}: {loss}")));
        }
        loss_curve.push(loss);
        adam_step(&mut model, &grads, &mut opt)?;
    }

    if cfg.epochs > 0 {
        let negatives = if cfg.alpha > 0.0 {
            draw_negatives(n, cfg.negatives, &mut neg_rng)
        } else {
            NegativeSets::AllButAnchor
        };
        let (loss, _) = objective_and_grad(&model, x, graph, labeled, labels, cfg.alpha, cfg.tau, &negatives)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("representation loss after training: {loss}")));
        }
        loss_curve.push(loss);
    }

    let (embeddings, logits) = model.forward(x)?;
    embeddings.check_finite("embeddings")?;
    Ok(ReprOutput {
        model,
        embeddings,
        logits,
        loss_curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, FeatureModel, SbmSpec};
    use crate::nn::grad_check;

    /// Direct evaluation of the displayed formula, independent of the
    /// matrix formulation above.
    fn brute_force_contrastive(e: &[Vec<f64>], adj: &[Vec<f64>], tau: f64, neg: &[Vec<usize>]) -> f64 {
        let cos = |a: &[f64], b: &[f64]| {
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            d / (na * nb)
        };
        let mut total = 0.0;
        for i in 0..e.len() {
            if adj[i].iter().all(|&w| w == 0.0) {
                continue;
            }
            let num: f64 = (0..e.len()).map(|j| adj[i][j] * (cos(&e[i], &e[j]) / tau).exp()).sum();
            let den: f64 = neg[i].iter().map(|&m| (cos(&e[i], &e[m]) / tau).exp()).sum();
            total -= (num / den).ln();
        }
        total
    }

    fn path3() -> (DenseMatrix, WeightedGraph) {
        let e = DenseMatrix::from_rows(&[[1.0, 0.0], [0.6, 0.8], [-0.5, 1.0]]).unwrap();
        let g = WeightedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        (e, g)
    }

    #[test]
    fn single_neighbor_equal_to_negative_set_gives_zero() {
        let e = DenseMatrix::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        let g = WeightedGraph::from_edges(2, [(0, 1)]).unwrap();
        let neg = NegativeSets::Explicit(vec![vec![1], vec![0]]);
        assert!(contrastive_loss(&e, &g, 0.7, &neg).unwrap().abs() < 1e-12);
    }

    #[test]
    fn isolated_node_contributes_nothing() {
        let (e, _) = path3();
        let g = WeightedGraph::from_edges(3, [(0, 1)]).unwrap();
        let t = contrastive_loss_and_grad(&e, &g, 1.0, &NegativeSets::AllButAnchor).unwrap();
        assert_eq!(t.contributing, 2);
        // Node 2 appears only as a negative, so its own term is absent.
        let neg = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        let rows: Vec<Vec<f64>> = e.iter_rows().map(<[f64]>::to_vec).collect();
        let adj = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0; 3]];
        assert!((t.loss - brute_force_contrastive(&rows, &adj, 1.0, &neg)).abs() < 1e-12);
    }

    #[test]
    fn path_graph_matches_direct_formula() {
        let (e, g) = path3();
        let rows: Vec<Vec<f64>> = e.iter_rows().map(<[f64]>::to_vec).collect();
        let adj = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]];
        let neg = vec![vec![1, 2], vec![0, 2], vec![0, 1]];
        let expected = brute_force_contrastive(&rows, &adj, 1.0, &neg);
        // Frozen from the direct evaluation above.
        assert!((expected - 0.643_549_422_867_407_2).abs() < 1e-12, "{expected:.15}");
        let dense = contrastive_loss(&e, &g, 1.0, &NegativeSets::AllButAnchor).unwrap();
        let explicit = contrastive_loss(&e, &g, 1.0, &NegativeSets::Explicit(neg)).unwrap();
        assert!((dense - expected).abs() < 1e-12);
        assert!((explicit - expected).abs() < 1e-12);
    }

    #[test]
    fn stronger_edge_to_similar_neighbor_never_raises_term() {
        // Node 0 has a high-cosine neighbor 1 and a low-cosine neighbor 2.
        let e = DenseMatrix::from_rows(&[[1.0, 0.1], [0.9, 0.2], [-1.0, 0.3], [0.0, 1.0]]).unwrap();
        let mut prev = f64::INFINITY;
        for w in [0.05, 0.2, 0.4, 0.7, 1.0] {
            let g = WeightedGraph::from_weighted_edges(4, [(0, 1, w), (0, 2, 0.5)]).unwrap();
            let neg = NegativeSets::Explicit(vec![vec![1, 2, 3], vec![], vec![], vec![]]);
            let term = contrastive_loss(&e, &g, 0.5, &neg).unwrap();
            assert!(term <= prev + 1e-15, "w={w}: {term} > {prev}");
            prev = term;
        }
    }

    #[test]
    fn contrastive_gradient_matches_finite_differences() {
        let (e, g) = path3();
        let g = g.reweighted(|i, _| if i == 0 { 0.3 } else { 0.9 }).unwrap();
        for negs in [
            NegativeSets::AllButAnchor,
            NegativeSets::Explicit(vec![vec![1, 2, 2], vec![0], vec![0, 1]]),
        ] {
            let err = grad_check(
                |flat| {
                    let m = DenseMatrix::new(3, 2, flat.to_vec()).unwrap();
                    let t = contrastive_loss_and_grad(&m, &g, 0.5, &negs).unwrap();
                    (t.loss, t.grad.into_vec())
                },
                e.as_slice(),
                1e-6,
                usize::MAX,
                0,
            );
            assert!(err < 1e-6, "{err}");
        }
    }

    fn ten_node_fixture() -> (FeatureMatrix, WeightedGraph, LabelStore) {
        let d = generate_sbm(&SbmSpec {
            classes: 2,
            nodes_per_class: 5,
            p_in: 0.6,
            p_out: 0.1,
            feature_dim: 4,
            features: FeatureModel::Gaussian { noise: 0.5 },
            seed: 5,
        })
        .unwrap();
        let g = d.graph.reweighted(|i, j| 0.2 + 0.6 * (((i * 7 + j) % 5) as f64 / 4.0)).unwrap();
        (d.features, g, d.labels)
    }

    #[test]
    fn full_objective_gradient_matches_finite_differences() {
        let (x, g, labels) = ten_node_fixture();
        let cfg = ReprConfig {
            hidden_dim: 6,
            embed_dim: 5,
            ..ReprConfig::default()
        };
        let labeled = [0, 3, 4, 8];
        for alpha in [0.0, 1.0] {
            for seed in 0..3 {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let model = ReprModel::init(x.dim(), &cfg, 2, &mut rng);
                let err = grad_check(
                    |flat| {
                        let mut m = model.clone();
                        m.assign_flat(flat).unwrap();
                        let (l, gr) =
                            objective_and_grad(&m, &x, &g, &labeled, &labels, alpha, 0.5, &NegativeSets::AllButAnchor)
                                .unwrap();
                        (l, gr.to_flat())
                    },
                    &model.to_flat(),
                    1e-6,
                    usize::MAX,
                    seed,
                );
                assert!(err < 1e-4, "alpha={alpha} seed={seed}: {err}");
            }
        }
    }

    #[test]
    fn classification_loss_reference_values() {
        let x = FeatureMatrix::new(DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap()).unwrap();
        let labels = LabelStore::new(vec![0, 1, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = ReprConfig {
            hidden_dim: 3,
            embed_dim: 2,
            ..ReprConfig::default()
        };
        let mut model = ReprModel::init(2, &cfg, 3, &mut rng);
        model.mlp2.w_out = DenseMatrix::zeros(3, 3);
        let l = classification_loss(&model, &x, &[0, 1, 2], &labels).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
        assert!(classification_loss(&model, &x, &[], &labels).is_err());

        // Logits (ln 1, ln 3) put probability 1/4 on class 0.
        let mut m2 = model.clone();
        m2.mlp2 = MlpParams::zeros(2, 3, 3);
        m2.mlp2.b_out = vec![0.0, 3f64.ln(), f64::NEG_INFINITY.max(-1e3)];
        let l = classification_loss(&m2, &x, &[0], &labels).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-9, "{l}");
    }

    #[test]
    fn zero_alpha_ignores_structure() {
        let (x, g, labels) = ten_node_fixture();
        let rewired = WeightedGraph::from_edges(10, [(0, 9), (1, 8), (2, 7)]).unwrap();
        let cfg = ReprConfig {
            alpha: 0.0,
            epochs: 20,
            hidden_dim: 8,
            embed_dim: 4,
            ..ReprConfig::default()
        };
        let a = train_representation(&x, &g, &[0, 5], &labels, &cfg, None, 3).unwrap();
        let b = train_representation(&x, &rewired, &[0, 5], &labels, &cfg, None, 3).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.logits, b.logits);
    }

    #[test]
    fn zero_epochs_with_warm_start_returns_init() {
        let (x, g, labels) = ten_node_fixture();
        let cfg = ReprConfig {
            epochs: 0,
            hidden_dim: 4,
            embed_dim: 3,
            ..ReprConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let init = ReprModel::init(x.dim(), &cfg, 2, &mut rng);
        let out = train_representation(&x, &g, &[1], &labels, &cfg, Some(&init), 9).unwrap();
        assert_eq!(out.model, init);
        assert!(out.loss_curve.is_empty());
    }

    #[test]
    fn training_reduces_loss_on_sbm() {
        let d = generate_sbm(&SbmSpec {
            classes: 3,
            nodes_per_class: 30,
            p_in: 0.2,
            p_out: 0.02,
            feature_dim: 8,
            features: FeatureModel::Gaussian { noise: 1.0 },
            seed: 2,
        })
        .unwrap();
        let cfg = ReprConfig {
            epochs: 60,
            hidden_dim: 16,
            embed_dim: 8,
            ..ReprConfig::default()
        };
        let labeled: Vec<usize> = (0..3).flat_map(|c| d.labels.members(c).into_iter().take(2)).collect();
        let out = train_representation(&d.features, &d.graph, &labeled, &d.labels, &cfg, None, 0).unwrap();
        let first = out.loss_curve[0];
        let last = *out.loss_curve.last().unwrap();
        assert!(last < first, "{first} -> {last}");
        assert_eq!(out.embeddings.shape(), (90, 8));
        assert!(out.embeddings.is_finite());
    }

    #[test]
    fn sampled_negatives_exclude_anchor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match draw_negatives(6, NegativeSampling::PerNode(50), &mut rng) {
            NegativeSets::Explicit(sets) => {
                for (i, s) in sets.iter().enumerate() {
                    assert_eq!(s.len(), 50);
                    assert!(s.iter().all(|&m| m != i && m < 6));
                }
            }
            NegativeSets::AllButAnchor => panic!("expected explicit sets"),
        }
        assert_eq!(draw_negatives(10, NegativeSampling::Auto, &mut rng), NegativeSets::AllButAnchor);
        assert!(matches!(draw_negatives(6000, NegativeSampling::Auto, &mut rng), NegativeSets::Explicit(_)));
    }
}
