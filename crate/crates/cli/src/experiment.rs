//! Grid execution: datasets, per-cell seeding and the parallel cell runner.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use galclean_core::graph::{
    generate_sbm, inject_random_interclass_edges, load_bundle, load_noise_edges, make_splits, Dataset, EdgeKey,
    SplitSizes,
};
use galclean_core::{run_cell, CellInputs, Error as CoreError, GalcleanConfig, Method, RunTrace, SplitSet, WeightedGraph};
use log::info;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetSpec, ExperimentConfig, NoiseMechanism};
use crate::ConfigError;

/// A dataset ready for noise injection.
pub struct LoadedData {
    pub label: String,
    /// Clean graph with features and labels.
    pub data: Dataset,
    /// Observed graph and its injected pairs when the bundle ships them.
    pub provenance: Option<(WeightedGraph, Vec<EdgeKey>)>,
}

impl LoadedData {
    pub fn num_classes(&self) -> usize {
        self.data.labels.num_classes()
    }
}

pub fn load_dataset(spec: &DatasetSpec) -> anyhow::Result<LoadedData> {
    let label = spec.label();
    if let Some(s) = &spec.synthetic {
        let data = generate_sbm(s).context("generating synthetic dataset")?;
        return Ok(LoadedData {
            label,
            data,
            provenance: None,
        });
    }
    let dir = spec.path.as_deref().expect("validated: path or synthetic");
    let bundle = match load_bundle(dir) {
        Ok(b) => b,
        Err(e @ CoreError::MissingFile(_)) => return Err(ConfigError(format!("dataset: {e}")).into()),
        Err(e) => return Err(e).with_context(|| format!("loading bundle {}", dir.display())),
    };
    let noise = load_noise_edges(dir)?;
    Ok(match noise {
        Some(noise) => {
            let observed = bundle.graph.clone();
            let clean = bundle.graph.without_edges(&noise);
            LoadedData {
                label,
                data: Dataset::new(clean, bundle.features, bundle.labels)?,
                provenance: Some((observed, noise)),
            }
        }
        None => LoadedData {
            label,
            data: bundle,
            provenance: None,
        },
    })
}

/// Seeds of one `(seed, ratio)` grid point. Every method and variant at the
/// same point sees the same noise, splits and run seed, so comparisons are
/// paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSeeds {
    pub noise: u64,
    pub splits: u64,
    pub run: u64,
}

impl CellSeeds {
    pub fn derive(seed: u64, ratio: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ratio.to_bits());
        Self {
            noise: rng.next_u64(),
            splits: rng.next_u64(),
            run: rng.next_u64(),
        }
    }
}

/// The observed graph of one grid point.
pub struct NoisyInstance {
    pub ratio: f64,
    pub noisy: WeightedGraph,
    pub noise: Vec<EdgeKey>,
    pub splits: SplitSet,
}

pub fn instantiate(
    loaded: &LoadedData,
    mechanism: NoiseMechanism,
    ratio: f64,
    seeds: CellSeeds,
) -> anyhow::Result<NoisyInstance> {
    let d = &loaded.data;
    let (noisy, noise, ratio) = match mechanism {
        NoiseMechanism::RandomInterclass => {
            let inj = inject_random_interclass_edges(&d.graph, &d.labels, ratio, seeds.noise)?;
            (inj.graph, inj.added, ratio)
        }
        NoiseMechanism::Bundle => {
            let Some((observed, noise)) = &loaded.provenance else {
                return Err(ConfigError("noise mechanism `bundle` needs a bundle with noise_edges.csv".into()).into());
            };
            let measured = noise.len() as f64 / d.graph.num_edges().max(1) as f64;
            (observed.clone(), noise.clone(), measured)
        }
    };
    let sizes = SplitSizes::for_graph(d.num_nodes(), d.labels.num_classes());
    let splits = make_splits(&d.labels, seeds.splits, sizes.valid, sizes.test)?;
    Ok(NoisyInstance {
        ratio,
        noisy,
        noise,
        splits,
    })
}

/// One configuration family of a grid, e.g. `kappa=0.5` in a sweep.
#[derive(Debug, Clone)]
pub struct Variant {
    pub name: String,
    /// Swept setting and its value, for plot files.
    pub setting: &'static str,
    pub value: f64,
    pub config: GalcleanConfig,
    pub methods: Vec<Method>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub dataset: String,
    pub variant: String,
    pub method: &'static str,
    pub scenario: &'static str,
    pub noise_ratio: f64,
    pub seed: u64,
    pub budget: usize,
    pub test_accuracy: f64,
    pub final_mean_clean_edge_weight: Option<f64>,
    pub final_mean_noisy_edge_weight: Option<f64>,
    pub edge_auc: Option<f64>,
}

pub struct CellRecord {
    pub row: ResultRow,
    pub runtime_seconds: f64,
    pub labeled: Vec<usize>,
    pub trace: RunTrace,
    pub config: GalcleanConfig,
}

struct CellJob<'a> {
    variant: &'a Variant,
    method: Method,
    ratio_idx: usize,
    seed: u64,
}

/// Runs every `variant × method × ratio × seed` cell with up to `jobs`
/// threads. Records come back in grid order whatever the completion order.
/// `on_done` sees each record as soon as its cell finishes.
pub fn run_grid(
    cfg: &ExperimentConfig,
    loaded: &LoadedData,
    variants: &[Variant],
    jobs: usize,
    on_done: &(dyn Fn(&CellRecord) -> anyhow::Result<()> + Sync),
) -> anyhow::Result<Vec<CellRecord>> {
    let ratios: Vec<f64> = match cfg.noise.mechanism {
        NoiseMechanism::RandomInterclass => cfg.noise.ratios.clone(),
        NoiseMechanism::Bundle => vec![f64::NAN],
    };
    let mut instances = Vec::new();
    for &ratio in &ratios {
        let mut per_seed = Vec::new();
        for &seed in &cfg.seeds {
            per_seed.push(instantiate(loaded, cfg.noise.mechanism, ratio, CellSeeds::derive(seed, ratio))?);
        }
        instances.push(per_seed);
    }

    let mut jobs_list = Vec::new();
    for variant in variants {
        for &method in &variant.methods {
            for ratio_idx in 0..ratios.len() {
                for &seed in &cfg.seeds {
                    jobs_list.push(CellJob {
                        variant,
                        method,
                        ratio_idx,
                        seed,
                    });
                }
            }
        }
    }
    let total = jobs_list.len();
    info!("running {total} cells on {jobs} threads");

    let seed_pos = |seed: u64| cfg.seeds.iter().position(|&s| s == seed).expect("seed from the grid");
    let run_one = |job: &CellJob<'_>| -> anyhow::Result<CellRecord> {
        let inst = &instances[job.ratio_idx][seed_pos(job.seed)];
        let seeds = CellSeeds::derive(job.seed, ratios[job.ratio_idx]);
        let d = &loaded.data;
        let inputs = CellInputs {
            features: &d.features,
            labels: &d.labels,
            clean: &d.graph,
            noisy: &inst.noisy,
            noise: &inst.noise,
            splits: &inst.splits,
        };
        let start = Instant::now();
        let out = run_cell(inputs, job.method, &job.variant.config, seeds.run).with_context(|| {
            format!(
                "cell {} / {} / ratio {} / seed {}",
                job.variant.name,
                job.method.as_str(),
                inst.ratio,
                job.seed
            )
        })?;
        let runtime_seconds = start.elapsed().as_secs_f64();
        let record = CellRecord {
            row: ResultRow {
                dataset: loaded.label.clone(),
                variant: job.variant.name.clone(),
                method: job.method.as_str(),
                scenario: job.variant.config.scenario.as_str(),
                noise_ratio: inst.ratio,
                seed: job.seed,
                budget: job.variant.config.budget,
                test_accuracy: out.test_accuracy,
                final_mean_clean_edge_weight: out.mean_clean_edge_weight,
                final_mean_noisy_edge_weight: out.mean_noisy_edge_weight,
                edge_auc: out.edge_auc,
            },
            runtime_seconds,
            labeled: out.labeled,
            trace: out.trace,
            config: job.variant.config.clone(),
        };
        on_done(&record)?;
        info!(
            "{} {} ratio={} seed={}: accuracy {:.4} ({:.1}s)",
            record.row.variant, record.row.method, record.row.noise_ratio, record.row.seed, record.row.test_accuracy, runtime_seconds
        );
        Ok(record)
    };

    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    pool.install(|| jobs_list.par_iter().map(run_one).collect())
}

/// Fails when an output directory holds an input bundle.
pub fn guard_output_dir(out: &Path, cfg: &ExperimentConfig) -> anyhow::Result<()> {
    if let Some(p) = cfg.dataset.as_ref().and_then(|d| d.path.as_ref()) {
        let same = match (out.canonicalize(), p.canonicalize()) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        };
        if same {
            bail!(ConfigError("output_dir must not be the dataset bundle directory".into()));
        }
    }
    Ok(())
}
