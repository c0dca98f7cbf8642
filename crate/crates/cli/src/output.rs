//! Result files.
//!
//! ```text
//! results.csv          one row per cell, byte-identical across reruns
//! timings.csv          wall-clock seconds per cell
//! aggregate.csv        mean and sample std per (dataset, variant, method, scenario, noise_ratio, budget)
//! plots/*.csv          plot-ready series
//! traces/<cell>.json   per-iteration trace of every cell
//! config.resolved.toml effective configuration after overrides
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use galclean_core::driver::Phase;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{CellRecord, ResultRow, Variant};

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.toml";
pub const PLOTS_DIR: &str = "plots";
pub const TRACES_DIR: &str = "traces";

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    write_atomic(path, &csv_bytes(rows)?)
}

/// File stem of a cell's trace. Ratios are printed with `{}` so the name is
/// stable across platforms.
pub fn cell_id(row: &ResultRow) -> String {
    let clean = |s: &str| s.replace(|c: char| !(c.is_ascii_alphanumeric() || c == '.' || c == '-'), "_");
    format!(
        "{}__{}__{}__r{}__s{}",
        clean(&row.dataset),
        clean(&row.variant),
        row.method,
        row.noise_ratio,
        row.seed
    )
}

#[derive(Serialize)]
struct TraceFile<'a> {
    #[serde(flatten)]
    row: &'a ResultRow,
    config: &'a galclean_core::GalcleanConfig,
    labeled: &'a [usize],
    trace: &'a galclean_core::RunTrace,
}

pub fn write_trace(out_dir: &Path, rec: &CellRecord) -> anyhow::Result<()> {
    let path = out_dir.join(TRACES_DIR).join(format!("{}.json", cell_id(&rec.row)));
    let file = TraceFile {
        row: &rec.row,
        config: &rec.config,
        labeled: &rec.labeled,
        trace: &rec.trace,
    };
    write_atomic(&path, &serde_json::to_vec_pretty(&file)?)
}

pub fn prepare_dir(out_dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir.join(TRACES_DIR)).with_context(|| format!("creating {}", out_dir.display()))?;
    fs::create_dir_all(out_dir.join(PLOTS_DIR))?;
    Ok(())
}

#[derive(Serialize)]
struct TimingRow<'a> {
    dataset: &'a str,
    variant: &'a str,
    method: &'a str,
    noise_ratio: f64,
    seed: u64,
    runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub variant: String,
    pub method: String,
    pub scenario: String,
    pub noise_ratio: f64,
    pub budget: usize,
    pub n: usize,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_clean_edge_weight: Option<f64>,
    pub mean_noisy_edge_weight: Option<f64>,
}

/// Sample mean and standard deviation (0 for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_of(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Vec<f64> = v.flatten().collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// Groups rows in first-appearance order.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut groups: Vec<(AggregateRow, Vec<&ResultRow>)> = Vec::new();
    for r in rows {
        let key = |a: &AggregateRow| {
            a.dataset == r.dataset
                && a.variant == r.variant
                && a.method == r.method
                && a.scenario == r.scenario
                && a.noise_ratio.to_bits() == r.noise_ratio.to_bits()
                && a.budget == r.budget
        };
        match groups.iter_mut().find(|(a, _)| key(a)) {
            Some((_, members)) => members.push(r),
            None => groups.push((
                AggregateRow {
                    dataset: r.dataset.clone(),
                    variant: r.variant.clone(),
                    method: r.method.to_string(),
                    scenario: r.scenario.to_string(),
                    noise_ratio: r.noise_ratio,
                    budget: r.budget,
                    n: 0,
                    mean_accuracy: 0.0,
                    std_accuracy: 0.0,
                    mean_clean_edge_weight: None,
                    mean_noisy_edge_weight: None,
                },
                vec![r],
            )),
        }
    }
    groups
        .into_iter()
        .map(|(mut a, members)| {
            let acc: Vec<f64> = members.iter().map(|r| r.test_accuracy).collect();
            (a.mean_accuracy, a.std_accuracy) = mean_std(&acc);
            a.n = members.len();
            a.mean_clean_edge_weight = mean_of(members.iter().map(|r| r.final_mean_clean_edge_weight));
            a.mean_noisy_edge_weight = mean_of(members.iter().map(|r| r.final_mean_noisy_edge_weight));
            a
        })
        .collect()
}

#[derive(Serialize)]
struct SweepPoint<'a> {
    setting: &'a str,
    value: f64,
    method: &'a str,
    noise_ratio: f64,
    mean_accuracy: f64,
    std_accuracy: f64,
}

#[derive(Serialize)]
struct NoisePoint<'a> {
    method: &'a str,
    noise_ratio: f64,
    mean_accuracy: f64,
    std_accuracy: f64,
    mean_clean_edge_weight: Option<f64>,
    mean_noisy_edge_weight: Option<f64>,
}

#[derive(Serialize)]
struct IterationPoint<'a> {
    variant: &'a str,
    method: &'a str,
    noise_ratio: f64,
    iteration: usize,
    phase: &'static str,
    mean_clean_edge_weight: Option<f64>,
    mean_noisy_edge_weight: Option<f64>,
    mean_downstream_accuracy: Option<f64>,
}

/// Per-iteration means over seeds.
fn iteration_curve(records: &[CellRecord]) -> Vec<IterationPoint<'_>> {
    let mut groups: BTreeMap<(usize, usize), Vec<&CellRecord>> = BTreeMap::new();
    // Key by first appearance of (variant, method, ratio) to keep grid order.
    let mut order: Vec<(&str, &str, u64)> = Vec::new();
    for r in records {
        let k = (r.row.variant.as_str(), r.row.method, r.row.noise_ratio.to_bits());
        let idx = order.iter().position(|o| *o == k).unwrap_or_else(|| {
            order.push(k);
            order.len() - 1
        });
        for it in 0..r.trace.iterations.len() {
            groups.entry((idx, it)).or_default().push(r);
        }
    }
    groups
        .into_iter()
        .map(|((idx, it), members)| {
            let recs: Vec<_> = members.iter().map(|m| &m.trace.iterations[it]).collect();
            IterationPoint {
                variant: order[idx].0,
                method: order[idx].1,
                noise_ratio: f64::from_bits(order[idx].2),
                iteration: recs[0].iteration,
                phase: match recs[0].phase {
                    Phase::Acquisition => "acquisition",
                    Phase::Refinement => "refinement",
                },
                mean_clean_edge_weight: mean_of(recs.iter().map(|r| r.mean_clean_edge_weight)),
                mean_noisy_edge_weight: mean_of(recs.iter().map(|r| r.mean_noisy_edge_weight)),
                mean_downstream_accuracy: mean_of(recs.iter().map(|r| r.downstream_accuracy)),
            }
        })
        .collect()
}

/// Writes everything except traces. `sweep` names the plot file of an
/// ablation; plain runs get the accuracy-vs-noise series instead.
pub fn write_summary(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    variants: &[Variant],
    records: &[CellRecord],
    sweep: Option<&str>,
) -> anyhow::Result<()> {
    let rows: Vec<ResultRow> = records.iter().map(|r| r.row.clone()).collect();
    write_csv(&out_dir.join(RESULTS_FILE), &rows)?;
    write_csv(
        &out_dir.join(TIMINGS_FILE),
        records.iter().map(|r| TimingRow {
            dataset: &r.row.dataset,
            variant: &r.row.variant,
            method: r.row.method,
            noise_ratio: r.row.noise_ratio,
            seed: r.row.seed,
            runtime_seconds: r.runtime_seconds,
        }),
    )?;
    let agg = aggregate(&rows);
    write_csv(&out_dir.join(AGGREGATE_FILE), &agg)?;
    write_atomic(&out_dir.join(RESOLVED_CONFIG_FILE), toml::to_string_pretty(cfg)?.as_bytes())?;

    let plots = out_dir.join(PLOTS_DIR);
    match sweep {
        Some(name) => {
            let points = agg.iter().map(|a| {
                let v = variants.iter().find(|v| v.name == a.variant).expect("variant of a row");
                SweepPoint {
                    setting: v.setting,
                    value: v.value,
                    method: &a.method,
                    noise_ratio: a.noise_ratio,
                    mean_accuracy: a.mean_accuracy,
                    std_accuracy: a.std_accuracy,
                }
            });
            write_csv(&plots.join(format!("{name}.csv")), points)?;
        }
        None => {
            let points = agg.iter().map(|a| NoisePoint {
                method: &a.method,
                noise_ratio: a.noise_ratio,
                mean_accuracy: a.mean_accuracy,
                std_accuracy: a.std_accuracy,
                mean_clean_edge_weight: a.mean_clean_edge_weight,
                mean_noisy_edge_weight: a.mean_noisy_edge_weight,
            });
            write_csv(&plots.join("accuracy_vs_noise.csv"), points)?;
        }
    }
    write_csv(&plots.join("iteration_curve.csv"), iteration_curve(records))?;
    Ok(())
}
