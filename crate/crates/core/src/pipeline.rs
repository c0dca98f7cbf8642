//! One experiment cell: build the scenario graphs, acquire labels with a
//! method, train the downstream GCN and score it on the test split.

use serde::{Deserialize, Serialize};

use crate::cleaning::jaccard_preclean;
use crate::driver::{
    edge_auc, edge_weight_summary, run_galclean, run_galclean_plus, run_random_baseline, GalcleanConfig, LabelOracle,
    RunInputs, RunTrace, Scenario,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, train_gcn};
use crate::graph::{EdgeKey, FeatureMatrix, LabelStore, NodeId, SplitSet, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Galclean,
    GalcleanPlus,
    Random,
    /// Random selection with the scenario graphs pre-cleaned.
    RandomPrecleaned,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Galclean, Method::GalcleanPlus, Method::Random, Method::RandomPrecleaned];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Galclean => "galclean",
            Method::GalcleanPlus => "galclean_plus",
            Method::Random => "random",
            Method::RandomPrecleaned => "random_precleaned",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?}")))
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {s:?}")))
    }
}

/// Graphs seen by label acquisition and by the downstream model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGraphs {
    pub selection: WeightedGraph,
    pub evaluation: WeightedGraph,
}

/// Pre-cleans `g` and drops the removed edges from the support.
pub fn preclean(g: &WeightedGraph, x: &FeatureMatrix, threshold: f64) -> Result<WeightedGraph> {
    Ok(jaccard_preclean(g, x, threshold)?.pruned())
}

pub fn scenario_graphs(
    scenario: Scenario,
    clean: &WeightedGraph,
    noisy: &WeightedGraph,
    x: &FeatureMatrix,
    preclean_threshold: f64,
) -> Result<ScenarioGraphs> {
    Ok(match scenario {
        Scenario::NoiseFree => ScenarioGraphs {
            selection: clean.clone(),
            evaluation: clean.clone(),
        },
        Scenario::PerturbedDataOnly => ScenarioGraphs {
            selection: noisy.clone(),
            evaluation: clean.clone(),
        },
        Scenario::PerturbedFull => ScenarioGraphs {
            selection: noisy.clone(),
            evaluation: noisy.clone(),
        },
        Scenario::Precleaned => {
            let p = preclean(noisy, x, preclean_threshold)?;
            ScenarioGraphs {
                selection: p.clone(),
                evaluation: p,
            }
        }
    })
}

/// Everything one cell needs. `noisy` is the observed graph and `noise` the
/// injected pairs it contains (sorted, `(min, max)`).
#[derive(Debug, Clone, Copy)]
pub struct CellInputs<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: &'a LabelStore,
    pub clean: &'a WeightedGraph,
    pub noisy: &'a WeightedGraph,
    pub noise: &'a [EdgeKey],
    pub splits: &'a SplitSet,
}

#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub test_accuracy: f64,
    pub labeled: Vec<NodeId>,
    /// Graph the downstream model was trained on.
    pub final_graph: WeightedGraph,
    /// Mean weight of clean and injected observed edges in `final_graph`.
    pub mean_clean_edge_weight: Option<f64>,
    pub mean_noisy_edge_weight: Option<f64>,
    pub edge_auc: Option<f64>,
    pub budget_used: usize,
    pub trace: RunTrace,
}

/// Runs `method` under `cfg.scenario` and scores the result.
pub fn run_cell(inputs: CellInputs<'_>, method: Method, cfg: &GalcleanConfig, seed: u64) -> Result<CellOutcome> {
    cfg.validate()?;
    let x = inputs.features;
    let graphs = scenario_graphs(cfg.scenario, inputs.clean, inputs.noisy, x, cfg.preclean_threshold)?;
    let graphs = if method == Method::RandomPrecleaned && cfg.scenario != Scenario::Precleaned {
        ScenarioGraphs {
            selection: preclean(&graphs.selection, x, cfg.preclean_threshold)?,
            evaluation: preclean(&graphs.evaluation, x, cfg.preclean_threshold)?,
        }
    } else {
        graphs
    };

    let mut oracle = LabelOracle::new(inputs.labels.clone(), cfg.budget);
    let (labeled, final_graph, trace) = match method {
        Method::Random | Method::RandomPrecleaned => {
            let (labeled, trace) = run_random_baseline(inputs.splits, &mut oracle, cfg.select.batch_size, seed)?;
            (labeled, graphs.evaluation, trace)
        }
        Method::Galclean | Method::GalcleanPlus => {
            let run_inputs = RunInputs {
                features: x,
                graph: &graphs.selection,
                splits: inputs.splits,
                noise: Some(inputs.noise),
                eval_labels: Some(inputs.labels),
            };
            let run = if method == Method::Galclean {
                run_galclean(run_inputs, &mut oracle, cfg, seed)?
            } else {
                run_galclean_plus(run_inputs, &mut oracle, cfg, seed)?
            };
            // The downstream model sees the cleaned graph unless the scenario
            // evaluates on a different graph than the one selection saw.
            let eval_graph = if graphs.evaluation == graphs.selection {
                run.graph
            } else {
                graphs.evaluation
            };
            (run.labeled, eval_graph, run.trace)
        }
    };

    let gcn_seed = seed ^ 0x5851_f42d_4c95_7f2d;
    let gcn = train_gcn(&final_graph, x, &labeled, inputs.labels, &inputs.splits.valid, &cfg.gcn, gcn_seed)?;
    let test_accuracy = evaluate(&gcn.params, &final_graph, x, &inputs.splits.test, inputs.labels)?;
    let (mean_clean, mean_noisy) = edge_weight_summary(&final_graph, inputs.noisy, inputs.noise);
    Ok(CellOutcome {
        test_accuracy,
        labeled,
        mean_clean_edge_weight: mean_clean,
        mean_noisy_edge_weight: mean_noisy,
        edge_auc: edge_auc(&final_graph, inputs.noisy, inputs.noise),
        final_graph,
        budget_used: oracle.budget_used(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, inject_random_interclass_edges, make_splits, FeatureModel, SbmSpec};

    #[test]
    fn scenario_graph_choice() {
        let d = generate_sbm(&SbmSpec {
            classes: 2,
            nodes_per_class: 20,
            p_in: 0.3,
            p_out: 0.0,
            feature_dim: 16,
            features: FeatureModel::Gaussian { noise: 0.3 },
            seed: 0,
        })
        .unwrap();
        let inj = inject_random_interclass_edges(&d.graph, &d.labels, 1.0, 0).unwrap();
        let x = &d.features;
        let g = |s| scenario_graphs(s, &d.graph, &inj.graph, x, 0.01).unwrap();
        assert_eq!(g(Scenario::NoiseFree).selection, d.graph);
        assert_eq!(g(Scenario::PerturbedDataOnly).selection, inj.graph);
        assert_eq!(g(Scenario::PerturbedDataOnly).evaluation, d.graph);
        assert_eq!(g(Scenario::PerturbedFull).evaluation, inj.graph);
        let p = g(Scenario::Precleaned);
        assert_eq!(p.selection, p.evaluation);
        assert!(p.selection.num_edges() < inj.graph.num_edges());
        assert!(p.selection.edges().all(|(i, j, w)| w == 1.0 && inj.graph.has_edge(i, j)));
    }

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        for s in Scenario::ALL {
            assert_eq!(s.as_str().parse::<Scenario>().unwrap(), s);
        }
        assert!("greedy".parse::<Method>().is_err());
    }

    #[test]
    fn every_method_runs_a_cell() {
        let d = generate_sbm(&SbmSpec {
            classes: 3,
            nodes_per_class: 30,
            p_in: 0.15,
            p_out: 0.0,
            feature_dim: 6,
            features: FeatureModel::Gaussian { noise: 1.0 },
            seed: 8,
        })
        .unwrap();
        let inj = inject_random_interclass_edges(&d.graph, &d.labels, 1.0, 1).unwrap();
        let splits = make_splits(&d.labels, 0, 5, 30).unwrap();
        let inputs = CellInputs {
            features: &d.features,
            labels: &d.labels,
            clean: &d.graph,
            noisy: &inj.graph,
            noise: &inj.added,
            splits: &splits,
        };
        let mut cfg = GalcleanConfig {
            budget: 12,
            refinement_iters: 1,
            ..GalcleanConfig::default()
        };
        cfg.repr.epochs = 20;
        cfg.cleaning.edge_epochs = 20;
        for m in Method::ALL {
            let out = run_cell(inputs, m, &cfg, 2).unwrap();
            assert!((0.0..=1.0).contains(&out.test_accuracy));
            assert_eq!(out.budget_used, 12);
            assert_eq!(out.labeled.len(), splits.initial.len() + 12);
        }
        let random = run_cell(inputs, Method::Random, &cfg, 2).unwrap();
        assert_eq!((random.mean_clean_edge_weight, random.mean_noisy_edge_weight), (Some(1.0), Some(1.0)));
    }
}
