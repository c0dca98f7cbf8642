//! Shared fixtures for the criterion benches.

use galclean_core::graph::{
    generate_sbm, inject_random_interclass_edges, make_splits, EdgeKey, FeatureModel, SbmSpec, SplitSizes,
};
use galclean_core::{CellInputs, Dataset, SplitSet, WeightedGraph};

/// A clean SBM dataset with its 100%-noise observed graph.
pub struct Fixture {
    pub data: Dataset,
    pub noisy: WeightedGraph,
    pub noise: Vec<EdgeKey>,
    pub splits: SplitSet,
}

impl Fixture {
    pub fn sbm(classes: usize, nodes_per_class: usize, feature_dim: usize) -> Self {
        let data = generate_sbm(&SbmSpec {
            classes,
            nodes_per_class,
            p_in: 0.05,
            p_out: 0.0,
            feature_dim,
            features: FeatureModel::Gaussian { noise: 1.0 },
            seed: 7,
        })
        .expect("valid spec");
        let inj = inject_random_interclass_edges(&data.graph, &data.labels, 1.0, 7).expect("noise");
        let sizes = SplitSizes::for_graph(data.num_nodes(), classes);
        let splits = make_splits(&data.labels, 7, sizes.valid, sizes.test).expect("splits");
        Self {
            data,
            noisy: inj.graph,
            noise: inj.added,
            splits,
        }
    }

    pub fn inputs(&self) -> CellInputs<'_> {
        CellInputs {
            features: &self.data.features,
            labels: &self.data.labels,
            clean: &self.data.graph,
            noisy: &self.noisy,
            noise: &self.noise,
            splits: &self.splits,
        }
    }
}
