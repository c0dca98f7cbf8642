//! `galclean` experiment harness.

mod config;
mod experiment;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use galclean_core::driver::{edge_auc, edge_weight_summary, run_galclean, run_galclean_plus, RunInputs};
use galclean_core::graph::{
    generate_sbm, inject_random_interclass_edges, load_bundle, load_noise_edges, make_splits, save_bundle,
    save_noise_edges, write_weighted_edges, Dataset, FeatureModel, SbmSpec, SplitSizes, NODES_FILE,
};
use galclean_core::{LabelOracle, Method};
use log::warn;

use config::ExperimentConfig;
use experiment::{load_dataset, run_grid, Variant};

/// Invalid configuration or arguments. Exits with code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "galclean", version, about = "Active learning on graphs with noisy structure")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the method × noise ratio × seed grid of a config.
    Run(GridArgs),
    /// Run one ablation study of a config.
    Ablate {
        which: Ablation,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Generate a stochastic block model bundle.
    Synth(SynthArgs),
    /// Clean one bundle's graph and write the learned edge weights.
    Clean(CleanArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct GridArgs {
    /// TOML experiment config.
    config: PathBuf,
    /// Override a config key, e.g. `--set galclean.cleaning.kappa=0.7`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<f64>>,
    #[arg(long)]
    budget_per_class: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Concurrent cells. Defaults to the available cores.
    #[arg(long, env = "GALCLEAN_JOBS")]
    jobs: Option<usize>,
}

impl GridArgs {
    /// Dedicated flags become `--set` overrides applied after the explicit ones.
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut o = self.overrides.clone();
        let list = |v: &[String]| format!("[{}]", v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(","));
        if let Some(s) = &self.seeds {
            o.push(format!("seeds=[{}]", s.iter().map(u64::to_string).collect::<Vec<_>>().join(",")));
        }
        if let Some(m) = &self.methods {
            o.push(format!("methods={}", list(m)));
        }
        if let Some(s) = &self.scenario {
            o.push(format!("scenario={s:?}"));
        }
        if let Some(r) = &self.ratios {
            o.push(format!("noise.ratios=[{}]", r.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")));
        }
        if let Some(b) = self.budget_per_class {
            o.push(format!("budget_per_class={b}"));
        }
        if let Some(d) = &self.output_dir {
            o.push(format!("output_dir={:?}", d.to_string_lossy()));
        }
        ExperimentConfig::load(Some(&self.config), &o)
    }

    fn jobs(&self) -> Result<usize, ConfigError> {
        match self.jobs {
            Some(0) => Err(ConfigError("--jobs must be at least 1".into())),
            Some(j) => Ok(j),
            None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Ablation {
    /// Cleanliness weight β as configured vs 0.
    Cleanliness,
    /// Refinement rounds as configured vs 0.
    Refinement,
    /// κ ∈ {0, 0.5, 0.7, 0.9, 0.99}.
    #[value(name = "kappa_sweep", alias = "kappa-sweep")]
    KappaSweep,
    /// Budget ∈ {5, 8, 10, 15, 20} labels per class.
    #[value(name = "budget_sweep", alias = "budget-sweep")]
    BudgetSweep,
}

const KAPPAS: [f64; 5] = [0.0, 0.5, 0.7, 0.9, 0.99];
const BUDGETS_PER_CLASS: [usize; 5] = [5, 8, 10, 15, 20];

impl Ablation {
    fn name(self) -> &'static str {
        match self {
            Ablation::Cleanliness => "cleanliness",
            Ablation::Refinement => "refinement",
            Ablation::KappaSweep => "kappa_sweep",
            Ablation::BudgetSweep => "budget_sweep",
        }
    }

    fn variants(self, cfg: &ExperimentConfig, classes: usize) -> Result<Vec<Variant>, ConfigError> {
        let base = cfg.cell_config(classes);
        let learned: Vec<Method> = cfg
            .methods
            .iter()
            .copied()
            .filter(|m| matches!(m, Method::Galclean | Method::GalcleanPlus))
            .collect();
        let need_learned = || {
            if learned.is_empty() {
                Err(ConfigError(format!("the {} ablation needs galclean or galclean_plus in methods", self.name())))
            } else {
                Ok(learned.clone())
            }
        };
        let variant = |name: String, setting, value, config| Variant {
            name,
            setting,
            value,
            config,
            methods: Vec::new(),
        };
        Ok(match self {
            Ablation::Cleanliness => {
                let methods = need_learned()?;
                [base.select.beta, 0.0]
                    .into_iter()
                    .map(|beta| {
                        let mut c = base.clone();
                        c.select.beta = beta;
                        Variant {
                            methods: methods.clone(),
                            ..variant(format!("beta={beta}"), "beta", beta, c)
                        }
                    })
                    .collect()
            }
            Ablation::Refinement => {
                if !learned.contains(&Method::GalcleanPlus) {
                    return Err(ConfigError("the refinement ablation needs galclean_plus in methods".into()));
                }
                [base.refinement_iters, 0]
                    .into_iter()
                    .map(|iters| {
                        let mut c = base.clone();
                        c.refinement_iters = iters;
                        Variant {
                            methods: vec![Method::GalcleanPlus],
                            ..variant(format!("refinement_iters={iters}"), "refinement_iters", iters as f64, c)
                        }
                    })
                    .collect()
            }
            Ablation::KappaSweep => {
                let methods = need_learned()?;
                KAPPAS
                    .into_iter()
                    .map(|k| {
                        let mut c = base.clone();
                        c.cleaning.kappa = k;
                        Variant {
                            methods: methods.clone(),
                            ..variant(format!("kappa={k}"), "kappa", k, c)
                        }
                    })
                    .collect()
            }
            Ablation::BudgetSweep => BUDGETS_PER_CLASS
                .into_iter()
                .map(|b| {
                    let mut c = base.clone();
                    c.budget = b * classes;
                    Variant {
                        methods: cfg.methods.clone(),
                        ..variant(format!("per_class={b}"), "per_class", b as f64, c)
                    }
                })
                .collect(),
        })
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output bundle directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 0.05)]
    p_in: f64,
    #[arg(long, default_value_t = 0.0)]
    p_out: f64,
    #[arg(long, default_value_t = 16)]
    feature_dim: usize,
    /// Standard deviation of Gaussian features around the class mean.
    #[arg(long, default_value_t = 1.0, conflicts_with = "words")]
    feature_noise: f64,
    /// Binary bag-of-words features with this many words per node.
    #[arg(long)]
    words: Option<usize>,
    /// Probability that a word comes from the node's class topic.
    #[arg(long, default_value_t = 0.6, requires = "words")]
    topic_prob: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inject `ratio · |E|` inter-class edges and record them in noise_edges.csv.
    #[arg(long)]
    noise_ratio: Option<f64>,
    /// Overwrite an existing bundle.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum CleanMethod {
    Galclean,
    #[value(name = "galclean_plus")]
    GalcleanPlus,
}

#[derive(Args)]
struct CleanArgs {
    /// Bundle directory; its edges.csv is the observed graph.
    bundle: PathBuf,
    /// Weighted edge CSV to write.
    #[arg(long, default_value = "edges_weighted.csv")]
    output: PathBuf,
    /// Experiment config whose `[galclean]` table and budget apply.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, value_enum, default_value = "galclean_plus")]
    method: CleanMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run_command(cfg: ExperimentConfig, variants_for: impl FnOnce(usize) -> Result<Vec<Variant>, ConfigError>, jobs: usize, sweep: Option<&str>) -> anyhow::Result<()> {
    let loaded = load_dataset(cfg.dataset()?)?;
    let variants = variants_for(loaded.num_classes())?;
    let out_dir = &cfg.output_dir;
    experiment::guard_output_dir(out_dir, &cfg)?;
    output::prepare_dir(out_dir)?;
    let records = run_grid(&cfg, &loaded, &variants, jobs, &|rec| output::write_trace(out_dir, rec))?;
    output::write_summary(out_dir, &cfg, &variants, &records, sweep)?;
    println!("{} cells written to {}", records.len(), out_dir.display());
    Ok(())
}

fn cmd_run(args: &GridArgs) -> anyhow::Result<()> {
    let cfg = args.load()?;
    let jobs = args.jobs()?;
    let methods = cfg.methods.clone();
    let base = |classes| cfg.cell_config(classes);
    let variants = |classes| {
        Ok(vec![Variant {
            name: "default".into(),
            setting: "default",
            value: 0.0,
            config: base(classes),
            methods,
        }])
    };
    run_command(cfg.clone(), variants, jobs, None)
}

fn cmd_ablate(which: Ablation, args: &GridArgs) -> anyhow::Result<()> {
    let cfg = args.load()?;
    let jobs = args.jobs()?;
    let c = cfg.clone();
    run_command(cfg, |classes| which.variants(&c, classes), jobs, Some(which.name()))
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    if a.out.join(NODES_FILE).exists() && !a.force {
        return Err(ConfigError(format!("{} already holds a bundle; pass --force to overwrite", a.out.display())).into());
    }
    let features = match a.words {
        Some(words) => FeatureModel::BagOfWords {
            words,
            topic_prob: a.topic_prob,
        },
        None => FeatureModel::Gaussian { noise: a.feature_noise },
    };
    let spec = SbmSpec {
        classes: a.classes,
        nodes_per_class: a.per_class,
        p_in: a.p_in,
        p_out: a.p_out,
        feature_dim: a.feature_dim,
        features,
        seed: a.seed,
    };
    spec.validate().map_err(|e| ConfigError(e.to_string()))?;
    let mut data = generate_sbm(&spec)?;
    let noise = match a.noise_ratio {
        Some(r) => {
            if !(r.is_finite() && r >= 0.0) {
                return Err(ConfigError(format!("--noise-ratio must be >= 0, got {r}")).into());
            }
            let inj = inject_random_interclass_edges(&data.graph, &data.labels, r, a.seed)?;
            data = Dataset::new(inj.graph, data.features, data.labels)?;
            Some(inj.added)
        }
        None => None,
    };
    save_bundle(&a.out, &data)?;
    let noise_path = a.out.join(galclean_core::graph::NOISE_FILE);
    match &noise {
        Some(n) => save_noise_edges(&a.out, n)?,
        None if noise_path.exists() => std::fs::remove_file(&noise_path)?,
        None => {}
    }
    println!(
        "wrote {} nodes, {} edges ({} injected) to {}",
        data.num_nodes(),
        data.graph.num_edges(),
        noise.as_ref().map_or(0, Vec::len),
        a.out.display()
    );
    Ok(())
}

fn cmd_clean(a: &CleanArgs) -> anyhow::Result<()> {
    let cfg = ExperimentConfig::load(a.config.as_deref(), &a.overrides)?;
    let data = match load_bundle(&a.bundle) {
        Ok(d) => d,
        Err(e @ galclean_core::Error::MissingFile(_)) => return Err(ConfigError(e.to_string()).into()),
        Err(e) => return Err(e.into()),
    };
    if same_dir(a.output.parent().unwrap_or(Path::new(".")), &a.bundle) {
        warn!("writing {} inside the input bundle", a.output.display());
    }
    let noise = load_noise_edges(&a.bundle)?;
    let classes = data.labels.num_classes();
    let gcfg = cfg.cell_config(classes);
    let sizes = SplitSizes::for_graph(data.num_nodes(), classes);
    let splits = make_splits(&data.labels, a.seed, sizes.valid, sizes.test)?;
    let inputs = RunInputs {
        features: &data.features,
        graph: &data.graph,
        splits: &splits,
        noise: noise.as_deref(),
        eval_labels: None,
    };
    let mut oracle = LabelOracle::new(data.labels.clone(), gcfg.budget);
    let run = match a.method {
        CleanMethod::Galclean => run_galclean(inputs, &mut oracle, &gcfg, a.seed)?,
        CleanMethod::GalcleanPlus => run_galclean_plus(inputs, &mut oracle, &gcfg, a.seed)?,
    };
    write_weighted_edges(&a.output, &run.graph).with_context(|| format!("writing {}", a.output.display()))?;
    println!(
        "{} edges reweighted with {} labels queried; written to {}",
        run.graph.num_edges(),
        oracle.budget_used(),
        a.output.display()
    );
    if let Some(noise) = &noise {
        let (clean, noisy) = edge_weight_summary(&run.graph, &data.graph, noise);
        let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.4}"));
        println!(
            "mean weight clean {} noisy {}, AUC {}",
            fmt(clean),
            fmt(noisy),
            fmt(edge_auc(&run.graph, &data.graph, noise))
        );
    }
    Ok(())
}

fn same_dir(a: &Path, b: &Path) -> bool {
    let a = if a.as_os_str().is_empty() { Path::new(".") } else { a };
    matches!((a.canonicalize(), b.canonicalize()), (Ok(x), Ok(y)) if x == y)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Ablate { which, grid } => cmd_ablate(*which, grid),
        Command::Synth(args) => cmd_synth(args),
        Command::Clean(args) => cmd_clean(args),
        Command::Version => {
            println!("galclean {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<ConfigError>()) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    }
}
