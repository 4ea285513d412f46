use clap::{Args, Parser, Subcommand};
use neuram::experiments::{self, emit_plot_data, ExperimentConfig, ExperimentKind, RunReport, OUTPUT_DIR_ENV};
use neuram::models;
use neuram::sensitivity::ArcLength;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "neuram", version, about = "Neural active manifold experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark model registry.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
    /// Train reductions and report their test errors.
    Train(RunArgs),
    /// Errors against training set size.
    Errors(RunArgs),
    /// Manifold sensitivity indices with a Sobol' comparison.
    Sensitivity(RunArgs),
    /// Single-fidelity, multifidelity and shared-space multifidelity estimates.
    Mfmc(RunArgs),
    /// Brute-force check of mean, variance and correlation under rank matching.
    VerifyTheory(RunArgs),
    /// Rewrite the CSV files of a saved run report.
    PlotData {
        /// Path to a `report.json`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ModelsAction {
    List,
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: $NEURAM_OUTPUT_DIR or ./neuram-out].
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    hf_model: Option<String>,
    #[arg(long)]
    lf_model: Option<String>,
    /// Training set size.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    seed_count: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    cost_ratio: Option<f64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    pilot_size: Option<usize>,
    /// Train a fresh artifact pair for every repetition.
    #[arg(long)]
    retrain_per_repetition: bool,
    #[arg(long)]
    grid_size: Option<usize>,
    /// Arc length rule: chord or derivative.
    #[arg(long)]
    arc_length: Option<String>,
    /// Sobol' samples; 0 disables the comparison.
    #[arg(long)]
    sobol_samples: Option<usize>,
    #[arg(long)]
    sobol_on_surrogate: bool,
    /// Number of random pilot pairs.
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Hyperparameter search trials; 0 fixes the architecture.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    trial_epochs: Option<usize>,
    #[arg(long)]
    hidden_layers: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    save_artifact: Option<PathBuf>,
    #[arg(long)]
    load_artifact: Option<PathBuf>,
    /// Record per-seed failures instead of aborting.
    #[arg(long)]
    keep_going: bool,
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl RunArgs {
    fn into_config(self, kind: ExperimentKind) -> neuram::Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if c.kind.is_some_and(|k| k != kind) {
            return Err(neuram::Error::Config {
                field: "kind".into(),
                message: format!("config is for {:?}, command is {kind:?}", c.kind.unwrap()),
            });
        }
        c.kind = Some(kind);
        set(&mut c.model, self.model);
        set(&mut c.hf_model, self.hf_model);
        set(&mut c.lf_model, self.lf_model);
        set(&mut c.n, self.n);
        set(&mut c.n_values, self.n_values);
        if self.seeds.is_some() {
            c.seeds = self.seeds;
        }
        set(&mut c.base_seed, self.base_seed);
        set(&mut c.seed_count, self.seed_count);
        set(&mut c.test_size, self.test_size);
        set(&mut c.budget, self.budget);
        set(&mut c.cost_ratio, self.cost_ratio);
        set(&mut c.repetitions, self.repetitions);
        set(&mut c.pilot_size, self.pilot_size);
        c.retrain_per_repetition |= self.retrain_per_repetition;
        set(&mut c.grid_size, self.grid_size);
        if let Some(rule) = self.arc_length {
            c.arc_length = match rule.as_str() {
                "chord" => ArcLength::Chord,
                "derivative" => ArcLength::Derivative,
                other => {
                    return Err(neuram::Error::Config {
                        field: "arc_length".into(),
                        message: format!("expected chord or derivative, got {other}"),
                    })
                }
            };
        }
        set(&mut c.sobol_samples, self.sobol_samples);
        c.sobol_on_surrogate |= self.sobol_on_surrogate;
        set(&mut c.pairs, self.pairs);
        set(&mut c.training.epochs, self.epochs);
        set(&mut c.training.learning_rate, self.learning_rate);
        set(&mut c.training.trials, self.trials);
        if self.trial_epochs.is_some() {
            c.training.trial_epochs = self.trial_epochs;
        }
        set(&mut c.training.hidden_layers, self.hidden_layers);
        set(&mut c.training.width, self.width);
        if self.save_artifact.is_some() {
            c.save_artifact = self.save_artifact;
        }
        if self.load_artifact.is_some() {
            c.load_artifact = self.load_artifact;
        }
        c.keep_going |= self.keep_going;
        // flag, then config, then environment
        if self.output_dir.is_some() {
            c.output_dir = self.output_dir;
        } else if c.output_dir.is_none() {
            c.output_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        }
        Ok(c)
    }
}

fn list_models() -> neuram::Result<()> {
    for entry in models::registry() {
        let m = &entry.model;
        let exact = entry.exact.names();
        println!("{}", m.name);
        println!("  {}", entry.description);
        println!("  dimension: {}", m.dim());
        println!("  inputs: {}", m.input_names.join(", "));
        println!("  distribution: {}", m.dist);
        let domain: Vec<String> = m.domain.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
        println!("  domain: {}", domain.join(" x "));
        println!("  exact quantities: {}", if exact.is_empty() { "none".into() } else { exact.join(", ") });
    }
    Ok(())
}

fn run_experiment(args: RunArgs, kind: ExperimentKind) -> neuram::Result<bool> {
    let config = args.into_config(kind)?;
    let report = experiments::run(&config)?;
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir)?;
    let report_path = dir.join("report.json");
    report.save(&report_path)?;
    let files = emit_plot_data(&report, &dir)?;
    println!("report: {}", report_path.display());
    for f in files.iter().chain(&report.artifact_paths) {
        println!("wrote {}", f.display());
    }
    for f in &report.failures {
        eprintln!("seed {} failed: {}", f.seed, f.error);
    }
    Ok(report.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Models { action: ModelsAction::List } => list_models().map(|_| true),
        Command::Train(a) => run_experiment(a, ExperimentKind::Train),
        Command::Errors(a) => run_experiment(a, ExperimentKind::Errors),
        Command::Sensitivity(a) => run_experiment(a, ExperimentKind::Sensitivity),
        Command::Mfmc(a) => run_experiment(a, ExperimentKind::Mfmc),
        Command::VerifyTheory(a) => run_experiment(a, ExperimentKind::VerifyTheory),
        Command::PlotData { report, output_dir } => RunReport::load(&report).and_then(|r| {
            let dir = output_dir
                .or_else(|| report.parent().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("."));
            for f in emit_plot_data(&r, dir)? {
                println!("wrote {}", f.display());
            }
            Ok(true)
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
