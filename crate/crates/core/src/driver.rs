//! The acquisition loop.
//!
//! Each iteration trains the representation on the current labeled set and
//! graph, selects a batch, queries the oracle, and re-estimates edge weights
//! of the observed graph from pseudo labels. Refinement repeats the
//! train/reweight half with the final labeled set and no queries.

use std::hash::{DefaultHasher, Hash, Hasher};

use log::{debug, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cleaning::{
    build_edge_training_set, pseudo_labels, reweight_graph, train_edge_predictor, CleanConfig, EdgePredictor,
};
use crate::error::{Error, OracleError, Result};
use crate::eval::{evaluate, train_gcn, GcnConfig};
use crate::graph::{EdgeKey, FeatureMatrix, LabelStore, NodeId, SplitSet, WeightedGraph};
use crate::representation::{train_representation, ReprConfig, ReprModel};
use crate::selection::{cleanliness_scores, kmeans, random_select, remove_nearest, select_batch, SelectConfig};

/// Ground-truth label lookup with budget accounting.
#[derive(Debug, Clone)]
pub struct LabelOracle {
    truth: LabelStore,
    budget_total: usize,
    budget_used: usize,
    revealed: Vec<bool>,
}

impl LabelOracle {
    pub fn new(truth: LabelStore, budget: usize) -> Self {
        let n = truth.len();
        Self {
            truth,
            budget_total: budget,
            budget_used: 0,
            revealed: vec![false; n],
        }
    }

    /// Marks nodes whose labels are known up front. Not charged.
    pub fn reveal_initial(&mut self, nodes: &[NodeId]) -> Result<(), OracleError> {
        for &v in nodes {
            self.check_node(v)?;
            self.revealed[v] = true;
        }
        Ok(())
    }

    fn check_node(&self, v: NodeId) -> Result<(), OracleError> {
        if v >= self.truth.len() {
            return Err(OracleError::UnknownNode {
                node: v,
                num_nodes: self.truth.len(),
            });
        }
        Ok(())
    }

    /// Reveals the label of `v` for one unit of budget.
    pub fn query(&mut self, v: NodeId) -> Result<usize, OracleError> {
        self.check_node(v)?;
        if self.revealed[v] {
            return Err(OracleError::AlreadyLabeled(v));
        }
        if self.budget_used >= self.budget_total {
            return Err(OracleError::BudgetExhausted {
                budget: self.budget_total,
            });
        }
        self.budget_used += 1;
        self.revealed[v] = true;
        Ok(self.truth.get(v))
    }

    pub fn is_labeled(&self, v: NodeId) -> bool {
        self.revealed.get(v).copied().unwrap_or(false)
    }

    pub fn budget_total(&self) -> usize {
        self.budget_total
    }

    pub fn budget_used(&self) -> usize {
        self.budget_used
    }

    pub fn budget_remaining(&self) -> usize {
        self.budget_total - self.budget_used
    }

    /// Labels of revealed nodes. Entries of unrevealed nodes are 0 and must
    /// not be read.
    pub fn revealed_labels(&self) -> LabelStore {
        let labels = (0..self.truth.len())
            .map(|v| if self.revealed[v] { self.truth.get(v) } else { 0 })
            .collect();
        LabelStore::with_classes(labels, self.truth.num_classes()).expect("class count already validated")
    }
}

/// Which graphs drive selection and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Clean graph everywhere.
    NoiseFree,
    /// Noisy graph for selection, clean graph for the downstream model.
    PerturbedDataOnly,
    /// Noisy graph everywhere.
    #[default]
    PerturbedFull,
    /// Noisy graph after feature-similarity pre-cleaning, everywhere.
    Precleaned,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::NoiseFree,
        Scenario::PerturbedDataOnly,
        Scenario::PerturbedFull,
        Scenario::Precleaned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::NoiseFree => "noise_free",
            Scenario::PerturbedDataOnly => "perturbed_data_only",
            Scenario::PerturbedFull => "perturbed_full",
            Scenario::Precleaned => "precleaned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GalcleanConfig {
    pub repr: ReprConfig,
    pub select: SelectConfig,
    pub cleaning: CleanConfig,
    pub gcn: GcnConfig,
    /// Total oracle queries `B`.
    pub budget: usize,
    /// Extra train/reweight rounds after the budget is spent.
    pub refinement_iters: usize,
    pub scenario: Scenario,
    /// Similarity threshold of the pre-cleaner.
    pub preclean_threshold: f64,
    /// Experimental: during refinement, add confident pseudo-labeled nodes
    /// to the classification loss.
    pub pseudo_label_loss: bool,
    /// Train and score a GCN after every iteration and store the accuracy in
    /// the trace.
    pub trace_accuracy: bool,
}

impl Default for GalcleanConfig {
    fn default() -> Self {
        Self {
            repr: ReprConfig::default(),
            select: SelectConfig::default(),
            cleaning: CleanConfig::default(),
            gcn: GcnConfig::default(),
            budget: 0,
            refinement_iters: 3,
            scenario: Scenario::default(),
            preclean_threshold: 0.01,
            pseudo_label_loss: false,
            trace_accuracy: false,
        }
    }
}

impl GalcleanConfig {
    pub fn validate(&self) -> Result<()> {
        self.repr.validate()?;
        self.select.validate()?;
        self.cleaning.validate()?;
        self.gcn.validate()
    }

    /// `ceil(budget / batch_size)`.
    pub fn planned_iterations(&self) -> usize {
        self.budget.div_ceil(self.select.batch_size.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Acquisition,
    Refinement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub phase: Phase,
    pub selected: Vec<NodeId>,
    pub labeled_size: usize,
    /// Final objective value of the representation training.
    pub repr_loss: f64,
    pub edge_loss: Option<f64>,
    pub edge_positives: usize,
    pub edge_negatives: usize,
    /// The edge set was degenerate and the previous graph was kept.
    pub cleaning_skipped: bool,
    pub mean_clean_edge_weight: Option<f64>,
    pub mean_noisy_edge_weight: Option<f64>,
    pub downstream_accuracy: Option<f64>,
    /// Fingerprint of the graph the representation was trained on.
    pub input_graph: u64,
    /// Fingerprint of the graph produced by this iteration.
    pub output_graph: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RunTrace {
    pub iterations: Vec<IterationRecord>,
    pub final_labeled: Vec<NodeId>,
    /// Final weighted edges as `(src, dst, weight)` with `src < dst`.
    pub final_edges: Vec<(NodeId, NodeId, f64)>,
}

impl RunTrace {
    pub fn acquisition_iterations(&self) -> usize {
        self.iterations.iter().filter(|r| r.phase == Phase::Acquisition).count()
    }
}

/// Order-sensitive hash of a graph's edges and exact weights.
pub fn graph_fingerprint(g: &WeightedGraph) -> u64 {
    let mut h = DefaultHasher::new();
    g.num_nodes().hash(&mut h);
    for (i, j, w) in g.edges() {
        (i, j, w.to_bits()).hash(&mut h);
    }
    h.finish()
}

/// Mean weight in `g` of the observed edges split by provenance. Observed
/// edges missing from `g` count as weight 0.
pub fn edge_weight_summary(
    g: &WeightedGraph,
    observed: &WeightedGraph,
    noise: &[EdgeKey],
) -> (Option<f64>, Option<f64>) {
    let (mut clean, mut noisy) = ((0.0, 0usize), (0.0, 0usize));
    for (i, j, _) in observed.edges() {
        let w = g.weight(i, j);
        let slot = if noise.binary_search(&(i, j)).is_ok() {
            &mut noisy
        } else {
            &mut clean
        };
        slot.0 += w;
        slot.1 += 1;
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    (mean(clean), mean(noisy))
}

/// Probability that a random clean observed edge outweighs a random injected
/// one in `g` (ties count half). `None` without edges of both kinds.
pub fn edge_auc(g: &WeightedGraph, observed: &WeightedGraph, noise: &[EdgeKey]) -> Option<f64> {
    let mut scored: Vec<(f64, bool)> = observed
        .edges()
        .map(|(i, j, _)| (g.weight(i, j), noise.binary_search(&(i, j)).is_err()))
        .collect();
    let pos = scored.iter().filter(|s| s.1).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of average ranks of the clean edges.
    let mut rank_sum = 0.0;
    let mut k = 0;
    while k < scored.len() {
        let mut end = k;
        while end + 1 < scored.len() && scored[end + 1].0 == scored[k].0 {
            end += 1;
        }
        let avg_rank = (k + end) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * scored[k..=end].iter().filter(|s| s.1).count() as f64;
        k = end + 1;
    }
    Some((rank_sum - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

/// Read-only inputs of a run.
#[derive(Debug, Clone, Copy)]
pub struct RunInputs<'a> {
    pub features: &'a FeatureMatrix,
    /// The observed graph; cleaning always reweights this edge set.
    pub graph: &'a WeightedGraph,
    pub splits: &'a SplitSet,
    /// Injected edges as sorted `(min, max)` pairs, for trace summaries.
    pub noise: Option<&'a [EdgeKey]>,
    /// Ground truth for per-iteration test accuracy. Never used for
    /// training.
    pub eval_labels: Option<&'a LabelStore>,
}

/// State carried from acquisition into refinement.
#[derive(Debug, Clone)]
pub struct EmState {
    pub labeled: Vec<NodeId>,
    pub graph: WeightedGraph,
    pub model: Option<ReprModel>,
    pub predictor: Option<EdgePredictor>,
    pub iteration: usize,
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub labeled: Vec<NodeId>,
    pub graph: WeightedGraph,
    pub trace: RunTrace,
    pub state: EmState,
}

struct StageSeeds {
    repr: u64,
    select: u64,
    edge: u64,
    gcn: u64,
}

impl StageSeeds {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        Self {
            repr: rng.next_u64(),
            select: rng.next_u64(),
            edge: rng.next_u64(),
            gcn: rng.next_u64(),
        }
    }
}

struct CleaningResult {
    graph: Option<WeightedGraph>,
    predictor: Option<EdgePredictor>,
    loss: Option<f64>,
    positives: usize,
    negatives: usize,
}

fn clean_step(
    inputs: &RunInputs<'_>,
    logits: &crate::nn::DenseMatrix,
    labeled: &[NodeId],
    revealed: &LabelStore,
    cfg: &CleanConfig,
    prev: Option<&EdgePredictor>,
    seed: u64,
) -> Result<CleaningResult> {
    let pl = pseudo_labels(logits, labeled, revealed)?;
    let ts = build_edge_training_set(inputs.graph, &pl, cfg.kappa);
    let init = if cfg.warm_start { prev } else { None };
    match train_edge_predictor(inputs.features, &ts, cfg, seed, init) {
        Ok(out) => Ok(CleaningResult {
            graph: Some(reweight_graph(inputs.graph, &out.predictor, inputs.features)?),
            loss: out.loss_curve.last().copied(),
            predictor: Some(out.predictor),
            positives: ts.positives.len(),
            negatives: ts.negatives.len(),
        }),
        Err(Error::DegenerateEdgeSet { positives, negatives }) => {
            warn!("edge training set degenerate ({positives} positives, {negatives} negatives); keeping previous graph");
            Ok(CleaningResult {
                graph: None,
                predictor: prev.cloned(),
                loss: None,
                positives,
                negatives,
            })
        }
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn record(
    inputs: &RunInputs<'_>,
    cfg: &GalcleanConfig,
    iteration: usize,
    phase: Phase,
    selected: Vec<NodeId>,
    labeled: &[NodeId],
    repr_loss: f64,
    cleaning: &CleaningResult,
    input_graph: &WeightedGraph,
    output_graph: &WeightedGraph,
    gcn_seed: u64,
) -> Result<IterationRecord> {
    let (mean_clean, mean_noisy) = match inputs.noise {
        Some(noise) => edge_weight_summary(output_graph, inputs.graph, noise),
        None => (None, None),
    };
    let downstream_accuracy = match (cfg.trace_accuracy, inputs.eval_labels) {
        (true, Some(truth)) if !inputs.splits.test.is_empty() => {
            let out = train_gcn(output_graph, inputs.features, labeled, truth, &inputs.splits.valid, &cfg.gcn, gcn_seed)?;
            Some(evaluate(&out.params, output_graph, inputs.features, &inputs.splits.test, truth)?)
        }
        _ => None,
    };
    Ok(IterationRecord {
        iteration,
        phase,
        selected,
        labeled_size: labeled.len(),
        repr_loss,
        edge_loss: cleaning.loss,
        edge_positives: cleaning.positives,
        edge_negatives: cleaning.negatives,
        cleaning_skipped: cleaning.graph.is_none(),
        mean_clean_edge_weight: mean_clean,
        mean_noisy_edge_weight: mean_noisy,
        downstream_accuracy,
        input_graph: graph_fingerprint(input_graph),
        output_graph: graph_fingerprint(output_graph),
    })
}

fn check_inputs(inputs: &RunInputs<'_>, oracle: &LabelOracle) -> Result<()> {
    let n = inputs.graph.num_nodes();
    if inputs.features.num_nodes() != n || oracle.revealed.len() != n {
        return Err(Error::Shape {
            op: "run",
            expected: format!("{n} nodes"),
            actual: format!("{} feature rows, {} oracle labels", inputs.features.num_nodes(), oracle.revealed.len()),
        });
    }
    if inputs.splits.initial.is_empty() {
        return Err(Error::InvalidArgument("initial labeled set is empty".into()));
    }
    Ok(())
}

/// Spends the oracle budget in batches, cleaning the graph after each one.
pub fn run_galclean(inputs: RunInputs<'_>, oracle: &mut LabelOracle, cfg: &GalcleanConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    check_inputs(&inputs, oracle)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    oracle.reveal_initial(&inputs.splits.initial)?;
    let mut labeled = inputs.splits.initial.clone();
    labeled.sort_unstable();
    let mut graph = inputs.graph.clone();
    let clean = cleanliness_scores(inputs.graph, inputs.features);
    let pool = &inputs.splits.pool;
    let mut model: Option<ReprModel> = None;
    let mut predictor: Option<EdgePredictor> = None;
    let mut trace = RunTrace::default();
    let mut iteration = 0;

    loop {
        let unlabeled_pool = pool.iter().filter(|&&v| !oracle.is_labeled(v)).count();
        let needed = cfg.select.batch_size.min(oracle.budget_remaining()).min(unlabeled_pool);
        if needed == 0 {
            break;
        }
        iteration += 1;
        let seeds = StageSeeds::draw(&mut rng);
        let revealed = oracle.revealed_labels();
        let rep = train_representation(
            inputs.features,
            &graph,
            &labeled,
            &revealed,
            &cfg.repr,
            model.as_ref(),
            seeds.repr,
        )?;

        // Never remove so much that fewer than `needed` candidates remain.
        let removal = cfg.select.removal_count(labeled.len()).min(pool.len() - needed);
        let v_filter: Vec<NodeId> = remove_nearest(pool, &labeled, &rep.embeddings, removal)?
            .into_iter()
            .filter(|&v| !oracle.is_labeled(v))
            .collect();
        let k = needed.min(v_filter.len());
        let assignment = kmeans(&rep.embeddings.select_rows(&v_filter), k, cfg.select.kmeans_iters, seeds.select)?;
        let batch = select_batch(&v_filter, &assignment, &rep.embeddings, &clean, cfg.select.beta, cfg.select.global_argmin)?;
        for &v in &batch {
            assert!(!oracle.is_labeled(v), "selection returned labeled node {v}");
            oracle.query(v)?;
        }
        labeled.extend_from_slice(&batch);
        labeled.sort_unstable();
        debug!("iteration {iteration}: selected {batch:?}, {} labeled", labeled.len());

        let revealed = oracle.revealed_labels();
        let cleaning = clean_step(
            &inputs,
            &rep.logits,
            &labeled,
            &revealed,
            &cfg.cleaning,
            predictor.as_ref(),
            seeds.edge,
        )?;
        let next = cleaning.graph.clone().unwrap_or_else(|| graph.clone());
        let repr_loss = rep.loss_curve.last().copied().unwrap_or(f64::NAN);
        trace.iterations.push(record(
            &inputs,
            cfg,
            iteration,
            Phase::Acquisition,
            batch,
            &labeled,
            repr_loss,
            &cleaning,
            &graph,
            &next,
            seeds.gcn,
        )?);
        graph = next;
        predictor = cleaning.predictor;
        model = Some(rep.model);
    }

    trace.final_labeled = labeled.clone();
    trace.final_edges = graph.edges().collect();
    Ok(RunOutput {
        labeled: labeled.clone(),
        graph: graph.clone(),
        trace,
        state: EmState {
            labeled,
            graph,
            model,
            predictor,
            iteration,
            rng,
        },
    })
}

/// Extra train/reweight rounds on the fixed labeled set. No queries.
pub fn run_refinement(
    inputs: RunInputs<'_>,
    oracle: &LabelOracle,
    run: &mut RunOutput,
    cfg: &GalcleanConfig,
    extra_iters: usize,
) -> Result<()> {
    let state = &mut run.state;
    let revealed = oracle.revealed_labels();
    let mut pseudo: Option<(Vec<NodeId>, LabelStore)> = None;
    for _ in 0..extra_iters {
        state.iteration += 1;
        let seeds = StageSeeds::draw(&mut state.rng);
        let (train_nodes, train_labels) = match (&pseudo, cfg.pseudo_label_loss) {
            (Some((nodes, labels)), true) => (nodes.clone(), labels.clone()),
            _ => (state.labeled.clone(), revealed.clone()),
        };
        let rep = train_representation(
            inputs.features,
            &state.graph,
            &train_nodes,
            &train_labels,
            &cfg.repr,
            state.model.as_ref(),
            seeds.repr,
        )?;
        let cleaning = clean_step(
            &inputs,
            &rep.logits,
            &state.labeled,
            &revealed,
            &cfg.cleaning,
            state.predictor.as_ref(),
            seeds.edge,
        )?;
        if cfg.pseudo_label_loss {
            let pl = pseudo_labels(&rep.logits, &state.labeled, &revealed)?;
            let nodes: Vec<NodeId> = (0..pl.len()).filter(|&v| pl.confidence[v] >= cfg.cleaning.kappa).collect();
            let labels = LabelStore::with_classes(pl.label.clone(), revealed.num_classes())?;
            pseudo = Some((nodes, labels));
        }
        let next = cleaning.graph.clone().unwrap_or_else(|| state.graph.clone());
        let repr_loss = rep.loss_curve.last().copied().unwrap_or(f64::NAN);
        run.trace.iterations.push(record(
            &inputs,
            cfg,
            state.iteration,
            Phase::Refinement,
            Vec::new(),
            &state.labeled,
            repr_loss,
            &cleaning,
            &state.graph,
            &next,
            seeds.gcn,
        )?);
        state.graph = next;
        state.predictor = cleaning.predictor;
        state.model = Some(rep.model);
    }
    run.graph = state.graph.clone();
    run.trace.final_edges = run.graph.edges().collect();
    Ok(())
}

/// Acquisition followed by `cfg.refinement_iters` refinement rounds.
pub fn run_galclean_plus(inputs: RunInputs<'_>, oracle: &mut LabelOracle, cfg: &GalcleanConfig, seed: u64) -> Result<RunOutput> {
    let mut run = run_galclean(inputs, oracle, cfg, seed)?;
    run_refinement(inputs, oracle, &mut run, cfg, cfg.refinement_iters)?;
    Ok(run)
}

/// Spends the budget on uniformly random pool nodes.
pub fn run_random_baseline(
    splits: &SplitSet,
    oracle: &mut LabelOracle,
    batch_size: usize,
    seed: u64,
) -> Result<(Vec<NodeId>, RunTrace)> {
    oracle.reveal_initial(&splits.initial)?;
    let candidates: Vec<NodeId> = splits.pool.iter().copied().filter(|&v| !oracle.is_labeled(v)).collect();
    let k = oracle.budget_remaining().min(candidates.len());
    let picked = random_select(&candidates, k, seed)?;
    let mut labeled = splits.initial.clone();
    let mut trace = RunTrace::default();
    for (idx, chunk) in picked.chunks(batch_size.max(1)).enumerate() {
        for &v in chunk {
            oracle.query(v)?;
        }
        labeled.extend_from_slice(chunk);
        trace.iterations.push(IterationRecord {
            iteration: idx + 1,
            phase: Phase::Acquisition,
            selected: chunk.to_vec(),
            labeled_size: labeled.len(),
            repr_loss: f64::NAN,
            edge_loss: None,
            edge_positives: 0,
            edge_negatives: 0,
            cleaning_skipped: true,
            mean_clean_edge_weight: None,
            mean_noisy_edge_weight: None,
            downstream_accuracy: None,
            input_graph: 0,
            output_graph: 0,
        });
    }
    labeled.sort_unstable();
    trace.final_labeled = labeled.clone();
    Ok((labeled, trace))
}
