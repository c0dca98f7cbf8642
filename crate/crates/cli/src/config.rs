//! Experiment configuration.
//!
//! A config is one TOML file. Every key has a default except the dataset;
//! `--set key.path=value` overrides are applied to the parsed TOML tree
//! before it is deserialized, so they accept exactly what the file accepts.
//!
//! ```toml
//! output_dir = "results"
//! seeds = [0, 1, 2]
//! methods = ["galclean_plus", "random"]
//! scenario = "perturbed_full"
//! budget_per_class = 8
//!
//! [dataset]
//! path = "data/cora"        # bundle directory, or a [dataset.synthetic] table
//!
//! [noise]
//! mechanism = "random_interclass"
//! ratios = [0.0, 0.5, 1.0]
//!
//! [galclean]                # any GalcleanConfig key except budget/scenario
//! select.beta = 1.0
//! ```

use std::path::{Path, PathBuf};

use galclean_core::graph::SbmSpec;
use galclean_core::{GalcleanConfig, Method, Scenario};
use serde::{Deserialize, Serialize};
use toml::Value;

use crate::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub scenario: Scenario,
    /// Oracle budget as labels per class. Ignored when `budget` is set.
    pub budget_per_class: usize,
    /// Absolute oracle budget.
    pub budget: Option<usize>,
    pub dataset: Option<DatasetSpec>,
    pub noise: NoiseSpec,
    pub galclean: GalcleanConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("results"),
            seeds: vec![0],
            methods: vec![Method::GalcleanPlus],
            scenario: Scenario::PerturbedFull,
            budget_per_class: 8,
            budget: None,
            dataset: None,
            noise: NoiseSpec::default(),
            galclean: GalcleanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    /// Label used in result files. Defaults to the bundle directory name, or
    /// `sbm` for synthetic data.
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub synthetic: Option<SbmSpec>,
}

impl DatasetSpec {
    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        match &self.path {
            Some(p) => p
                .file_name()
                .map(|f| f.to_string_lossy().into_owned())
                .unwrap_or_else(|| "bundle".into()),
            None => "sbm".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMechanism {
    /// Add `ratio · |E|` random inter-class edges to the clean graph.
    #[default]
    RandomInterclass,
    /// Use the bundle's edges as the observed graph and its
    /// `noise_edges.csv` as provenance. `ratios` must be empty.
    Bundle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub mechanism: NoiseMechanism,
    pub ratios: Vec<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            mechanism: NoiseMechanism::RandomInterclass,
            ratios: vec![1.0],
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if given), applies `overrides` and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut tree = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError(format!("cannot read config {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| ConfigError(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: ExperimentConfig = Value::Table(tree)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError("seeds must not be empty".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError("methods must not be empty".into()));
        }
        if self.noise.ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(ConfigError("noise ratios must be finite and >= 0".into()));
        }
        match self.noise.mechanism {
            NoiseMechanism::RandomInterclass if self.noise.ratios.is_empty() => {
                return Err(ConfigError("noise.ratios must not be empty".into()));
            }
            NoiseMechanism::Bundle if !self.noise.ratios.is_empty() => {
                return Err(ConfigError(
                    "noise.ratios must be empty with the bundle mechanism; the ratio is measured".into(),
                ));
            }
            _ => {}
        }
        if self.galclean.budget != 0 {
            return Err(ConfigError("set the budget with top-level budget or budget_per_class".into()));
        }
        if self.galclean.scenario != Scenario::default() {
            return Err(ConfigError("set the scenario with the top-level scenario key".into()));
        }
        if let Some(d) = &self.dataset {
            match (&d.path, &d.synthetic) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(ConfigError("dataset needs exactly one of path or synthetic".into())),
            }
            if let Some(s) = &d.synthetic {
                s.validate().map_err(|e| ConfigError(e.to_string()))?;
            }
        }
        self.galclean.validate().map_err(|e| ConfigError(e.to_string()))
    }

    pub fn dataset(&self) -> Result<&DatasetSpec, ConfigError> {
        self.dataset
            .as_ref()
            .ok_or_else(|| ConfigError("no dataset configured ([dataset] path or synthetic)".into()))
    }

    /// Total oracle budget for a dataset with `classes` classes.
    pub fn total_budget(&self, classes: usize) -> usize {
        self.budget.unwrap_or(self.budget_per_class * classes)
    }

    /// The GalcleanConfig for one cell.
    pub fn cell_config(&self, classes: usize) -> GalcleanConfig {
        GalcleanConfig {
            budget: self.total_budget(classes),
            scenario: self.scenario,
            ..self.galclean.clone()
        }
    }
}

/// Applies `a.b.c=value`. The value is parsed as a TOML value and falls
/// back to a plain string, so `methods=["random"]`, `seeds=[1,2]` and
/// `scenario=precleaned` all work.
pub fn apply_override(tree: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError(format!("override {assignment:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError(format!("bad override key {key:?}")));
    }
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.split('.').collect();
    let (last, path) = parts.split_last().expect("key is non-empty");
    let mut table = tree;
    for part in path {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override {key:?}: {part} is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
