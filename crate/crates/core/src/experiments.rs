//! Configuration-driven experiment runs and their machine-readable output.

use crate::error::{Error, Result};
use crate::models::{self, ModelSpec};
use crate::multifidelity::{
    ideal_correlation, mfmc_estimate, monte_carlo, pearson, plan_from_pilot, verify_idealized_theory, MfmcPlan,
    SharedSpace,
};
use crate::neuram::{
    reduction_errors, train_neuram, Architecture, NeurAMArtifact, SearchConfig, TrainConfig,
};
use crate::nn::FitConfig;
use crate::sensitivity::{
    global_indices, sobol_first_order, ArcLength, SensitivityResult, SobolComparison, SobolSource,
};
use crate::util::{fmt_f64, mean_std, mix_seed};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

pub const OUTPUT_DIR_ENV: &str = "NEURAM_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "neuram-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Train,
    Errors,
    Sensitivity,
    Mfmc,
    VerifyTheory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    /// Random search trials; zero trains `hidden_layers x width` directly.
    pub trials: usize,
    pub trial_epochs: Option<usize>,
    pub validation_fraction: f64,
    pub max_layers: usize,
    pub max_width: usize,
    pub hidden_layers: usize,
    pub width: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let search = SearchConfig::default();
        Self {
            epochs: 10_000,
            learning_rate: 1e-3,
            batch_size: None,
            trials: search.trials,
            trial_epochs: None,
            validation_fraction: search.validation_fraction,
            max_layers: search.max_layers,
            max_width: search.max_width,
            hidden_layers: 2,
            width: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub model: String,
    pub hf_model: String,
    pub lf_model: String,
    /// Training set size.
    pub n: usize,
    /// Training set sizes for the error study.
    pub n_values: Vec<usize>,
    /// Explicit seed list; otherwise `base_seed .. base_seed + seed_count`.
    pub seeds: Option<Vec<u64>>,
    pub base_seed: u64,
    pub seed_count: usize,
    pub test_size: usize,
    pub budget: f64,
    pub cost_ratio: f64,
    /// Number of estimator repetitions; seeds expand to this many when no
    /// explicit list is given.
    pub repetitions: usize,
    pub pilot_size: usize,
    /// Train fresh artifacts for every repetition instead of reusing one pair.
    pub retrain_per_repetition: bool,
    pub grid_size: usize,
    pub arc_length: ArcLength,
    pub sobol_samples: usize,
    pub sobol_on_surrogate: bool,
    pub pairs: usize,
    pub output_dir: Option<PathBuf>,
    pub save_artifact: Option<PathBuf>,
    pub load_artifact: Option<PathBuf>,
    pub keep_going: bool,
    pub training: TrainingSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: None,
            model: "parabola".into(),
            hf_model: "q_hf".into(),
            lf_model: "q_lf".into(),
            n: 1000,
            n_values: vec![10, 30, 50, 100, 500, 1000],
            seeds: None,
            base_seed: 0,
            seed_count: 1,
            test_size: 1000,
            budget: 1000.0,
            cost_ratio: 0.01,
            repetitions: 100,
            pilot_size: 1000,
            retrain_per_repetition: false,
            grid_size: crate::sensitivity::DEFAULT_GRID_SIZE,
            arc_length: ArcLength::Chord,
            sobol_samples: 1 << 14,
            sobol_on_surrogate: false,
            pairs: 1000,
            output_dir: None,
            save_artifact: None,
            load_artifact: None,
            keep_going: false,
            training: TrainingSection::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML document; errors carry the line and column.
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = match e.span() {
                Some(span) => {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = span.start - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}")
                }
                None => "document".to_string(),
            };
            Error::Config { field, message: e.message().to_string() }
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Explicit seeds, or the expansion of `base_seed` and `count`.
    pub fn seed_list(&self, count: usize) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..count as u64).map(|k| self.base_seed + k).collect(),
        }
    }

    fn config_err(field: &str, message: impl Into<String>) -> Error {
        Error::Config { field: field.into(), message: message.into() }
    }

    pub fn validate(&self) -> Result<()> {
        let kind = self.kind.ok_or_else(|| Self::config_err("kind", "experiment kind is required"))?;
        let check_model = |field: &str, name: &str| {
            models::model(name).map(|_| ()).map_err(|e| Self::config_err(field, e.to_string()))
        };
        if let Some(s) = &self.seeds {
            if s.is_empty() {
                return Err(Self::config_err("seeds", "seed list is empty"));
            }
        }
        if self.training.epochs == 0 {
            return Err(Self::config_err("training.epochs", "must be positive"));
        }
        if self.training.trials == 0 && (self.training.hidden_layers == 0 || self.training.width == 0) {
            return Err(Self::config_err("training", "fixed architecture needs hidden_layers and width >= 1"));
        }
        match kind {
            ExperimentKind::Train | ExperimentKind::Sensitivity => {
                check_model("model", &self.model)?;
                if self.seeds.is_none() && self.seed_count == 0 {
                    return Err(Self::config_err("seed_count", "must be at least 1"));
                }
                if self.n < 2 {
                    return Err(Self::config_err("n", "need at least two training samples"));
                }
            }
            ExperimentKind::Errors => {
                check_model("model", &self.model)?;
                if self.n_values.is_empty() || self.n_values.iter().any(|&n| n < 2) {
                    return Err(Self::config_err("n_values", "need sizes of at least 2"));
                }
                if self.seeds.is_none() && self.seed_count == 0 {
                    return Err(Self::config_err("seed_count", "must be at least 1"));
                }
            }
            ExperimentKind::Mfmc => {
                check_model("hf_model", &self.hf_model)?;
                check_model("lf_model", &self.lf_model)?;
                if self.repetitions == 0 {
                    return Err(Self::config_err("repetitions", "must be at least 1"));
                }
                if self.pilot_size < 2 {
                    return Err(Self::config_err("pilot_size", "need at least two pilot samples"));
                }
            }
            ExperimentKind::VerifyTheory => {
                if self.pairs == 0 {
                    return Err(Self::config_err("pairs", "must be at least 1"));
                }
                if self.pilot_size < 2 {
                    return Err(Self::config_err("pilot_size", "need at least two pilot samples"));
                }
            }
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            seed,
            fit: FitConfig {
                epochs: t.epochs,
                learning_rate: t.learning_rate,
                batch_size: t.batch_size,
                seed,
                ..FitConfig::default()
            },
            architecture: Architecture::uniform(t.hidden_layers, t.width),
            search: SearchConfig {
                trials: t.trials,
                trial_epochs: t.trial_epochs,
                validation_fraction: t.validation_fraction,
                max_layers: t.max_layers,
                max_width: t.max_width,
            },
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRow {
    pub seed: u64,
    pub n: usize,
    pub loss: f64,
    pub loss_projected_surrogate: f64,
    pub loss_surrogate: f64,
    pub loss_reprojection: f64,
    pub mae_e1: f64,
    pub mse_e1: f64,
    pub mae_e2: f64,
    pub mse_e2: f64,
    /// `mse_e2` in normalized output units.
    pub mse_e2_normalized: f64,
    pub latent_lo: f64,
    pub latent_hi: f64,
    pub architecture: Architecture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub n: usize,
    pub seed: u64,
    pub mae_e1: f64,
    pub mse_e1: f64,
    pub mae_e2: f64,
    pub mse_e2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub group: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub seed: u64,
    pub result: SensitivityResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfmcRow {
    pub repetition: usize,
    pub seed: u64,
    pub single_fidelity: f64,
    pub mfmc: f64,
    pub mfmc_neuram: f64,
    pub rho_pilot: f64,
    /// Pilot correlation of the high-fidelity and modified low-fidelity models.
    pub rho_modified: f64,
    pub rho_ideal: f64,
    pub plan: MfmcPlan,
    pub plan_neuram: MfmcPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub pair: usize,
    pub seed: u64,
    pub noise: f64,
    pub negated: bool,
    pub rho: f64,
    pub rho_modified: f64,
    pub mean_preserved: bool,
    pub var_preserved: bool,
    pub corr_improved: bool,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RunData {
    Train {
        model: String,
        rows: Vec<TrainRow>,
        aggregates: Vec<Aggregate>,
    },
    Errors {
        model: String,
        rows: Vec<ErrorRow>,
        aggregates: Vec<Aggregate>,
    },
    Sensitivity {
        model: String,
        input_names: Vec<String>,
        rows: Vec<SensitivityRow>,
        aggregates: Vec<Aggregate>,
        sobol: Option<SobolComparison>,
    },
    Mfmc {
        hf_model: String,
        lf_model: String,
        q_exact: Option<f64>,
        artifacts_reused: bool,
        rows: Vec<MfmcRow>,
        aggregates: Vec<Aggregate>,
    },
    VerifyTheory {
        rows: Vec<TheoryRow>,
        mean_preserved: usize,
        var_preserved: usize,
        corr_improved: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub data: RunData,
    pub failures: Vec<Failure>,
    pub wall_clock_seconds: f64,
    pub artifact_paths: Vec<PathBuf>,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Runs every seed, returning rows sorted by seed. Without `keep_going` the
/// first failure aborts the run.
/// Successful `(seed, value)` pairs and the recorded failures.
type Seeded<T> = (Vec<(u64, T)>, Vec<Failure>);

fn per_seed<T, F>(seeds: &[u64], keep_going: bool, f: F) -> Result<Seeded<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync,
{
    let mut results: Vec<(u64, Result<T>)> = seeds.par_iter().map(|&s| (s, f(s))).collect();
    results.sort_by_key(|(s, _)| *s);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(v) => rows.push((seed, v)),
            Err(e) if keep_going => failures.push(Failure { seed, error: e.to_string() }),
            Err(e) => return Err(Error::Seed { seed, source: Box::new(e) }),
        }
    }
    Ok((rows, failures))
}

fn aggregate(group: &str, metric: &str, values: &[f64]) -> Aggregate {
    let (mean, std) = mean_std(values);
    Aggregate { group: group.into(), metric: metric.into(), mean, std, count: values.len() }
}

fn artifact_name(model: &str, seed: u64) -> String {
    format!("{model}_seed{seed}.json")
}

/// Dispatches on `config.kind`.
pub fn run(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    let start = Instant::now();
    let (data, failures, artifact_paths) = match config.kind.expect("validated") {
        ExperimentKind::Train => run_train(config)?,
        ExperimentKind::Errors => run_errors(config)?,
        ExperimentKind::Sensitivity => run_sensitivity(config)?,
        ExperimentKind::Mfmc => run_mfmc(config)?,
        ExperimentKind::VerifyTheory => run_verify_theory(config)?,
    };
    Ok(RunReport {
        config: config.clone(),
        data,
        failures,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        artifact_paths,
    })
}

type RunParts = (RunData, Vec<Failure>, Vec<PathBuf>);

/// Artifacts for `seeds`: loaded from `load_artifact` when given, trained otherwise.
fn artifacts_for(
    config: &ExperimentConfig,
    model: &ModelSpec,
    n: usize,
    seeds: &[u64],
) -> Result<Seeded<NeurAMArtifact>> {
    if let Some(path) = &config.load_artifact {
        let a = NeurAMArtifact::load(path)?;
        if a.dim() != model.dim() {
            return Err(Error::DimensionMismatch { context: "loaded artifact", expected: model.dim(), got: a.dim() });
        }
        let seed = a.report.as_ref().map_or(0, |r| r.seed);
        return Ok((vec![(seed, a)], Vec::new()));
    }
    per_seed(seeds, config.keep_going, |seed| train_neuram(model, n, &config.train_config(seed)))
}

fn run_train(config: &ExperimentConfig) -> Result<RunParts> {
    let model = models::model(&config.model)?;
    let seeds = config.seed_list(config.seed_count);
    if config.save_artifact.is_some() && seeds.len() != 1 {
        return Err(Error::Config {
            field: "save_artifact".into(),
            message: "needs exactly one seed".into(),
        });
    }
    let (arts, failures) = artifacts_for(config, &model, config.n, &seeds)?;
    let dir = config.output_dir().join("artifacts");
    std::fs::create_dir_all(&dir)?;
    let mut paths = Vec::new();
    let mut rows = Vec::new();
    for (seed, a) in &arts {
        let p = dir.join(artifact_name(&model.name, *seed));
        a.save(&p)?;
        paths.push(p);
        if let Some(extra) = &config.save_artifact {
            a.save(extra)?;
            paths.push(extra.clone());
        }
        let test = model.sample(config.test_size, mix_seed(*seed, TEST_STREAM))?;
        let e = reduction_errors(a, &model, &test)?;
        let report = a.report.as_ref();
        let loss = report.map(|r| r.final_loss);
        rows.push(TrainRow {
            seed: *seed,
            n: report.map_or(0, |r| r.n_samples),
            loss: loss.as_ref().map_or(f64::NAN, |l| l.total()),
            loss_projected_surrogate: loss.as_ref().map_or(f64::NAN, |l| l.projected_surrogate),
            loss_surrogate: loss.as_ref().map_or(f64::NAN, |l| l.surrogate),
            loss_reprojection: loss.as_ref().map_or(f64::NAN, |l| l.reprojection),
            mae_e1: e.mae_e1,
            mse_e1: e.mse_e1,
            mae_e2: e.mae_e2,
            mse_e2: e.mse_e2,
            mse_e2_normalized: e.scaled(a.output_normalizer.half_range).mse_e2,
            latent_lo: a.latent_interval.lo,
            latent_hi: a.latent_interval.hi,
            architecture: report.map_or_else(Architecture::default, |r| r.architecture.clone()),
        });
    }
    let mut aggregates = Vec::new();
    for (metric, get) in error_metrics_train() {
        let v: Vec<f64> = rows.iter().map(get).collect();
        aggregates.push(aggregate("all", metric, &v));
    }
    Ok((RunData::Train { model: model.name.clone(), rows, aggregates }, failures, paths))
}

const TEST_STREAM: u64 = 0x7E57;

type TrainGetter = fn(&TrainRow) -> f64;

fn error_metrics_train() -> [(&'static str, TrainGetter); 5] {
    [
        ("loss", |r| r.loss),
        ("mae_e1", |r| r.mae_e1),
        ("mse_e1", |r| r.mse_e1),
        ("mae_e2", |r| r.mae_e2),
        ("mse_e2", |r| r.mse_e2),
    ]
}

type ErrorGetter = fn(&ErrorRow) -> f64;

const ERROR_METRICS: [(&str, ErrorGetter); 4] = [
    ("mae_e1", |r| r.mae_e1),
    ("mse_e1", |r| r.mse_e1),
    ("mae_e2", |r| r.mae_e2),
    ("mse_e2", |r| r.mse_e2),
];

fn run_errors(config: &ExperimentConfig) -> Result<RunParts> {
    let model = models::model(&config.model)?;
    let seeds = config.seed_list(config.seed_count);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in &config.n_values {
        let (results, fails) = per_seed(&seeds, config.keep_going, |seed| {
            let a = train_neuram(&model, n, &config.train_config(seed))?;
            let test = model.sample(config.test_size, mix_seed(seed, TEST_STREAM))?;
            reduction_errors(&a, &model, &test)
        })?;
        failures.extend(fails);
        rows.extend(results.into_iter().map(|(seed, e)| ErrorRow {
            n,
            seed,
            mae_e1: e.mae_e1,
            mse_e1: e.mse_e1,
            mae_e2: e.mae_e2,
            mse_e2: e.mse_e2,
        }));
    }
    let aggregates = error_aggregates(&rows);
    Ok((RunData::Errors { model: model.name.clone(), rows, aggregates }, failures, Vec::new()))
}

/// Mean and standard deviation of every metric per training set size.
pub fn error_aggregates(rows: &[ErrorRow]) -> Vec<Aggregate> {
    let mut by_n: BTreeMap<usize, Vec<&ErrorRow>> = BTreeMap::new();
    for r in rows {
        by_n.entry(r.n).or_default().push(r);
    }
    let mut out = Vec::new();
    for (n, group) in by_n {
        for (metric, get) in ERROR_METRICS {
            let v: Vec<f64> = group.iter().map(|r| get(r)).collect();
            out.push(aggregate(&n.to_string(), metric, &v));
        }
    }
    out
}

fn run_sensitivity(config: &ExperimentConfig) -> Result<RunParts> {
    let model = models::model(&config.model)?;
    let seeds = config.seed_list(config.seed_count);
    let (arts, mut failures) = artifacts_for(config, &model, config.n, &seeds)?;
    let mut rows = Vec::new();
    for (seed, a) in &arts {
        match global_indices(a, config.grid_size, config.arc_length) {
            Ok(result) => rows.push(SensitivityRow { seed: *seed, result }),
            Err(e) if config.keep_going => failures.push(Failure { seed: *seed, error: e.to_string() }),
            Err(e) => return Err(Error::Seed { seed: *seed, source: Box::new(e) }),
        }
    }
    let names = model.input_names.clone();
    let mut aggregates = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let v: Vec<f64> = rows.iter().map(|r| r.result.global[i]).collect();
        aggregates.push(aggregate(name, "global", &v));
    }
    let sobol = if config.sobol_samples == 0 {
        None
    } else if config.sobol_on_surrogate {
        let (_, a) = arts.first().ok_or(Error::Empty("artifacts"))?;
        let indices = sobol_first_order(
            |x: &[f64]| a.surrogate_eval(x).unwrap_or(f64::NAN),
            &model.dist,
            config.sobol_samples,
            config.base_seed,
        )?;
        Some(SobolComparison { indices, source: SobolSource::Surrogate })
    } else {
        let indices =
            sobol_first_order(|x: &[f64]| model.eval_unchecked(x), &model.dist, config.sobol_samples, config.base_seed)?;
        Some(SobolComparison { indices, source: SobolSource::ExactModel })
    };
    Ok((
        RunData::Sensitivity { model: model.name.clone(), input_names: names, rows, aggregates, sobol },
        failures,
        Vec::new(),
    ))
}

type ArtifactCell = OnceLock<std::result::Result<Arc<NeurAMArtifact>, String>>;

fn cached(cell: &ArtifactCell, train: impl FnOnce() -> Result<NeurAMArtifact>) -> Result<Arc<NeurAMArtifact>> {
    cell.get_or_init(|| train().map(Arc::new).map_err(|e| e.to_string()))
        .clone()
        .map_err(Error::InvalidArgument)
}

/// One repetition of the estimator comparison on a given pair of models.
pub struct MfmcContext<'a> {
    pub hf: &'a ModelSpec,
    pub lf: &'a ModelSpec,
    pub config: &'a ExperimentConfig,
    shared_hf: ArtifactCell,
    shared_lf: ArtifactCell,
    shared_lf_neg: ArtifactCell,
}

const PILOT_STREAM: u64 = 0x9117;
const SF_STREAM: u64 = 0x5F;
const MF_STREAM: u64 = 0x3F;

impl<'a> MfmcContext<'a> {
    pub fn new(hf: &'a ModelSpec, lf: &'a ModelSpec, config: &'a ExperimentConfig) -> Self {
        Self {
            hf,
            lf,
            config,
            shared_hf: OnceLock::new(),
            shared_lf: OnceLock::new(),
            shared_lf_neg: OnceLock::new(),
        }
    }

    fn lf_model(&self, flip: bool) -> ModelSpec {
        if flip { self.lf.negated() } else { self.lf.clone() }
    }

    /// Runs repetition `repetition` with seed `seed`.
    pub fn repetition(&self, repetition: usize, seed: u64) -> Result<MfmcRow> {
        let cfg = self.config;
        let n = cfg.pilot_size;
        // fresh artifacts train on the pilot itself; shared ones see a new pilot
        let pilot_seed = if cfg.retrain_per_repetition { seed } else { mix_seed(seed, PILOT_STREAM) };
        let pilot = self.hf.sample(n, pilot_seed)?;
        let hf_pilot = self.hf.eval_many(&pilot)?;
        let lf_pilot = self.lf.eval_many(&pilot)?;
        let plan = plan_from_pilot(cfg.budget, cfg.cost_ratio, &hf_pilot, &lf_pilot)?;
        let flip = plan.rho < 0.0;
        let lf_model = self.lf_model(flip);

        let (hf_art, lf_art) = if cfg.retrain_per_repetition {
            let tc = cfg.train_config(seed);
            (Arc::new(train_neuram(self.hf, n, &tc)?), Arc::new(train_neuram(&lf_model, n, &tc)?))
        } else {
            let tc = cfg.train_config(cfg.base_seed);
            let hf_art = cached(&self.shared_hf, || train_neuram(self.hf, n, &tc))?;
            let cell = if flip { &self.shared_lf_neg } else { &self.shared_lf };
            let lf_art = cached(cell, || train_neuram(&lf_model, n, &tc))?;
            (hf_art, lf_art)
        };
        let space = SharedSpace::new((*hf_art).clone(), (*lf_art).clone(), &pilot, &pilot, lf_model, flip)?;
        let mod_pilot: Vec<f64> = pilot.iter().map(|x| space.modified_lf(x)).collect::<Result<_>>()?;
        let mut plan_neuram = plan_from_pilot(cfg.budget, cfg.cost_ratio, &hf_pilot, &mod_pilot)?;
        plan_neuram.sign_flip = flip;

        let sf = monte_carlo(self.hf, cfg.budget.floor() as usize, mix_seed(seed, SF_STREAM))?;
        let est_seed = mix_seed(seed, MF_STREAM);
        let lf = self.lf;
        let mfmc = mfmc_estimate(self.hf, &|x: &[f64]| lf.eval(x), &plan, est_seed)?;
        let mfmc_neuram = mfmc_estimate(self.hf, &|x: &[f64]| space.modified_lf(x), &plan_neuram, est_seed)?;
        Ok(MfmcRow {
            repetition,
            seed,
            single_fidelity: sf,
            mfmc: mfmc.q_hat,
            mfmc_neuram: mfmc_neuram.q_hat,
            rho_pilot: plan.rho,
            rho_modified: pearson(&hf_pilot, &mod_pilot)?,
            rho_ideal: ideal_correlation(&hf_pilot, &lf_pilot)?,
            plan,
            plan_neuram,
        })
    }
}

fn run_mfmc(config: &ExperimentConfig) -> Result<RunParts> {
    let hf = models::model(&config.hf_model)?;
    let lf = models::model(&config.lf_model)?;
    if hf.dist != lf.dist {
        return Err(Error::invalid("bundled comparison needs both models on the same input distribution"));
    }
    let ctx = MfmcContext::new(&hf, &lf, config);
    let seeds = config.seed_list(config.repetitions);
    let index: BTreeMap<u64, usize> = seeds.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let (results, failures) = per_seed(&seeds, config.keep_going, |seed| ctx.repetition(index[&seed], seed))?;
    let rows: Vec<MfmcRow> = results.into_iter().map(|(_, r)| r).collect();
    let aggregates = mfmc_aggregates(&rows);
    let q_exact = models::exact_quantities(&hf.name).ok().and_then(|q| q.mean).map(|r| r.value[0]);
    Ok((
        RunData::Mfmc {
            hf_model: hf.name.clone(),
            lf_model: lf.name.clone(),
            q_exact,
            artifacts_reused: !config.retrain_per_repetition,
            rows,
            aggregates,
        },
        failures,
        Vec::new(),
    ))
}

type MfmcGetter = fn(&MfmcRow) -> f64;

pub const MFMC_ESTIMATORS: [(&str, MfmcGetter); 3] = [
    ("single_fidelity", |r| r.single_fidelity),
    ("mfmc", |r| r.mfmc),
    ("mfmc_neuram", |r| r.mfmc_neuram),
];

const MFMC_CORRELATIONS: [(&str, MfmcGetter); 3] = [
    ("rho_pilot", |r| r.rho_pilot),
    ("rho_modified", |r| r.rho_modified),
    ("rho_ideal", |r| r.rho_ideal),
];

pub fn mfmc_aggregates(rows: &[MfmcRow]) -> Vec<Aggregate> {
    MFMC_ESTIMATORS
        .iter()
        .chain(&MFMC_CORRELATIONS)
        .map(|(name, get)| {
            let v: Vec<f64> = rows.iter().map(get).collect();
            aggregate(name, "value", &v)
        })
        .collect()
}

/// Random pilot pair: `hf ~ N(0, 1)`, `lf = s (hf + noise N(0, 1))` with a
/// random noise level and sign.
pub fn random_pilot_pair(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let noise = Uniform::new(0.05, 3.0).expect("valid range").sample(&mut rng);
    let negated = Uniform::new(0.0, 1.0).expect("valid range").sample(&mut rng) < 0.25;
    let hf: Vec<f64> = (0..n).map(|_| std_normal.sample(&mut rng)).collect();
    let sign = if negated { -1.0 } else { 1.0 };
    let lf = hf.iter().map(|h| sign * (h + noise * std_normal.sample(&mut rng))).collect();
    (hf, lf, noise, negated)
}

fn run_verify_theory(config: &ExperimentConfig) -> Result<RunParts> {
    let seeds: Vec<u64> = (0..config.pairs as u64).map(|k| mix_seed(config.base_seed, k)).collect();
    let rows: Vec<TheoryRow> = (0..config.pairs)
        .into_par_iter()
        .map(|pair| {
            let seed = seeds[pair];
            let (hf, lf, noise, negated) = random_pilot_pair(config.pilot_size, seed);
            let r = verify_idealized_theory(&hf, &lf)?;
            Ok(TheoryRow {
                pair,
                seed,
                noise,
                negated,
                rho: r.rho,
                rho_modified: r.rho_modified,
                mean_preserved: r.mean_preserved,
                var_preserved: r.var_preserved,
                corr_improved: r.corr_improved,
                ties: r.ties,
            })
        })
        .collect::<Result<_>>()?;
    let count = |f: fn(&TheoryRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let data = RunData::VerifyTheory {
        mean_preserved: count(|r| r.mean_preserved),
        var_preserved: count(|r| r.var_preserved),
        corr_improved: count(|r| r.corr_improved),
        rows,
    };
    Ok((data, Vec::new(), Vec::new()))
}

// ---------------------------------------------------------------------------
// CSV output

fn csv_row(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn aggregates_csv(aggs: &[Aggregate], group_name: &str) -> String {
    let mut s = format!("{group_name},metric,mean,std,count\n");
    for a in aggs {
        s.push_str(&csv_row(&[a.group.clone(), a.metric.clone(), fmt_f64(a.mean), fmt_f64(a.std), a.count.to_string()]));
    }
    s
}

/// Long-format CSV files for external plotting. Fails on a report without rows.
pub fn emit_plot_data(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut files: Vec<(String, String)> = Vec::new();
    match &report.data {
        RunData::Train { rows, aggregates, .. } => {
            if rows.is_empty() {
                return Err(Error::Empty("training rows"));
            }
            let mut s = String::from(
                "seed,n,loss,loss_projected_surrogate,loss_surrogate,loss_reprojection,mae_e1,mse_e1,mae_e2,mse_e2,mse_e2_normalized,latent_lo,latent_hi\n",
            );
            for r in rows {
                let mut f = vec![r.seed.to_string(), r.n.to_string()];
                f.extend(
                    [
                        r.loss,
                        r.loss_projected_surrogate,
                        r.loss_surrogate,
                        r.loss_reprojection,
                        r.mae_e1,
                        r.mse_e1,
                        r.mae_e2,
                        r.mse_e2,
                        r.mse_e2_normalized,
                        r.latent_lo,
                        r.latent_hi,
                    ]
                    .map(fmt_f64),
                );
                s.push_str(&csv_row(&f));
            }
            files.push(("train.csv".into(), s));
            files.push(("train_summary.csv".into(), aggregates_csv(aggregates, "group")));
        }
        RunData::Errors { rows, aggregates, .. } => {
            if rows.is_empty() {
                return Err(Error::Empty("error rows"));
            }
            let mut s = String::from("n,seed,metric,value\n");
            for r in rows {
                for (metric, get) in ERROR_METRICS {
                    s.push_str(&csv_row(&[r.n.to_string(), r.seed.to_string(), metric.into(), fmt_f64(get(r))]));
                }
            }
            files.push(("errors_per_seed.csv".into(), s));
            files.push(("errors.csv".into(), aggregates_csv(aggregates, "n")));
        }
        RunData::Sensitivity { input_names, rows, aggregates, sobol, .. } => {
            if rows.is_empty() {
                return Err(Error::Empty("sensitivity rows"));
            }
            let mut long = String::from("seed,t,input,theta\n");
            for r in rows {
                files.push((format!("sensitivity_local_seed{}.csv", r.seed), r.result.local_csv(input_names)));
                for (t, local) in r.result.t_grid.iter().zip(&r.result.local) {
                    for (i, name) in input_names.iter().enumerate() {
                        let v = local.as_ref().map_or(f64::NAN, |l| l[i]);
                        long.push_str(&csv_row(&[r.seed.to_string(), fmt_f64(*t), name.clone(), fmt_f64(v)]));
                    }
                }
            }
            files.push(("sensitivity_local.csv".into(), long));
            let mut s = String::from("input,global_mean,global_std,sobol_first,sobol_first_raw\n");
            for (i, name) in input_names.iter().enumerate() {
                let a = &aggregates[i];
                let (c, r) = sobol.as_ref().map_or((f64::NAN, f64::NAN), |c| (c.indices.clipped[i], c.indices.raw[i]));
                s.push_str(&csv_row(&[name.clone(), fmt_f64(a.mean), fmt_f64(a.std), fmt_f64(c), fmt_f64(r)]));
            }
            files.push(("sensitivity_summary.csv".into(), s));
            let mut per_seed = String::from("seed,input,global\n");
            for r in rows {
                for (i, name) in input_names.iter().enumerate() {
                    per_seed.push_str(&csv_row(&[r.seed.to_string(), name.clone(), fmt_f64(r.result.global[i])]));
                }
            }
            files.push(("sensitivity_global.csv".into(), per_seed));
        }
        RunData::Mfmc { rows, aggregates, .. } => {
            if rows.is_empty() {
                return Err(Error::Empty("repetitions"));
            }
            let mut s = String::from("estimator,repetition,seed,value\n");
            for (name, get) in MFMC_ESTIMATORS {
                for r in rows {
                    s.push_str(&csv_row(&[name.into(), r.repetition.to_string(), r.seed.to_string(), fmt_f64(get(r))]));
                }
            }
            files.push(("mfmc_estimates.csv".into(), s));
            let mut c = String::from("repetition,seed,rho_pilot,rho_modified,rho_ideal,n_hf,n_lf,n_hf_neuram,n_lf_neuram\n");
            for r in rows {
                c.push_str(&csv_row(&[
                    r.repetition.to_string(),
                    r.seed.to_string(),
                    fmt_f64(r.rho_pilot),
                    fmt_f64(r.rho_modified),
                    fmt_f64(r.rho_ideal),
                    r.plan.n_hf.to_string(),
                    r.plan.n_lf.to_string(),
                    r.plan_neuram.n_hf.to_string(),
                    r.plan_neuram.n_lf.to_string(),
                ]));
            }
            files.push(("mfmc_correlations.csv".into(), c));
            files.push(("mfmc_summary.csv".into(), aggregates_csv(aggregates, "estimator")));
        }
        RunData::VerifyTheory { rows, .. } => {
            if rows.is_empty() {
                return Err(Error::Empty("pilot pairs"));
            }
            let mut s =
                String::from("pair,seed,noise,negated,rho,rho_modified,mean_preserved,var_preserved,corr_improved,ties\n");
            for r in rows {
                s.push_str(&csv_row(&[
                    r.pair.to_string(),
                    r.seed.to_string(),
                    fmt_f64(r.noise),
                    r.negated.to_string(),
                    fmt_f64(r.rho),
                    fmt_f64(r.rho_modified),
                    r.mean_preserved.to_string(),
                    r.var_preserved.to_string(),
                    r.corr_improved.to_string(),
                    r.ties.to_string(),
                ]));
            }
            files.push(("theory.csv".into(), s));
        }
    }
    let mut paths = Vec::new();
    for (name, content) in files {
        let p = dir.join(name);
        std::fs::write(&p, content)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            kind: Some(kind),
            n: 30,
            n_values: vec![10, 30],
            seed_count: 2,
            test_size: 50,
            repetitions: 3,
            pilot_size: 40,
            pairs: 20,
            grid_size: 50,
            sobol_samples: 200,
            training: TrainingSection { epochs: 20, trials: 0, hidden_layers: 1, width: 4, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn toml_parse_and_errors() {
        let c = ExperimentConfig::from_toml(
            "kind = \"errors\"\nmodel = \"q1\"\nseeds = [3, 1]\n[training]\nepochs = 5\ntrials = 0\n",
        )
        .unwrap();
        assert_eq!(c.kind, Some(ExperimentKind::Errors));
        assert_eq!(c.seed_list(7), vec![3, 1]);
        assert_eq!(c.training.epochs, 5);
        c.validate().unwrap();

        let e = ExperimentConfig::from_toml("kind = \"train\"\n\nbudget = \"lots\"\n").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let e = ExperimentConfig::from_toml("colour = 1\n").unwrap_err();
        assert!(e.to_string().contains("colour"));
        let bad = ExperimentConfig { model: "nope".into(), ..quick(ExperimentKind::Train) };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "model"));
    }

    #[test]
    fn seeds_expand_from_base() {
        let c = ExperimentConfig { base_seed: 5, ..Default::default() };
        assert_eq!(c.seed_list(3), vec![5, 6, 7]);
    }

    #[test]
    fn errors_run_is_reproducible_and_aggregates_match() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig { output_dir: Some(dir.path().into()), ..quick(ExperimentKind::Errors) };
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        let pa = emit_plot_data(&a, dir.path().join("a")).unwrap();
        let pb = emit_plot_data(&b, dir.path().join("b")).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let RunData::Errors { rows, aggregates, .. } = &a.data else { panic!() };
        assert_eq!(rows.len(), 4);
        for agg in aggregates {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.n.to_string() == agg.group)
                .map(|r| ERROR_METRICS.iter().find(|m| m.0 == agg.metric).unwrap().1(r))
                .collect();
            let (m, s) = mean_std(&v);
            assert!((m - agg.mean).abs() <= 1e-12 * m.abs().max(1.0));
            assert!((s - agg.std).abs() <= 1e-12 * s.abs().max(1.0));
        }
    }

    #[test]
    fn mfmc_and_theory_runs() {
        let cfg = quick(ExperimentKind::Mfmc);
        let r = run(&cfg).unwrap();
        let RunData::Mfmc { rows, q_exact, artifacts_reused, .. } = &r.data else { panic!() };
        assert_eq!(rows.len(), 3);
        assert!(*artifacts_reused);
        assert!(q_exact.is_some());
        assert!(rows.windows(2).all(|w| w[0].seed < w[1].seed));

        let r = run(&quick(ExperimentKind::VerifyTheory)).unwrap();
        let RunData::VerifyTheory { corr_improved, mean_preserved, .. } = r.data else { panic!() };
        assert_eq!((corr_improved, mean_preserved), (20, 20));
    }

    #[test]
    fn train_writes_artifacts_and_sensitivity_loads_them() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            output_dir: Some(dir.path().into()),
            seeds: Some(vec![4]),
            save_artifact: Some(dir.path().join("one.json")),
            ..quick(ExperimentKind::Train)
        };
        let r = run(&cfg).unwrap();
        assert_eq!(r.artifact_paths.len(), 2);
        let s = ExperimentConfig {
            load_artifact: Some(dir.path().join("one.json")),
            ..quick(ExperimentKind::Sensitivity)
        };
        let rep = run(&s).unwrap();
        let RunData::Sensitivity { rows, sobol, .. } = &rep.data else { panic!() };
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].seed, 4);
        assert_eq!(sobol.as_ref().unwrap().source, SobolSource::ExactModel);
        let files = emit_plot_data(&rep, dir.path().join("plots")).unwrap();
        let local = std::fs::read_to_string(files.iter().find(|p| p.ends_with("sensitivity_local_seed4.csv")).unwrap())
            .unwrap();
        assert!(local.starts_with("t,theta_x1,theta_x2\n"));
    }

    #[test]
    fn empty_report_is_an_error() {
        let report = RunReport {
            config: ExperimentConfig::default(),
            data: RunData::Mfmc {
                hf_model: "q_hf".into(),
                lf_model: "q_lf".into(),
                q_exact: None,
                artifacts_reused: true,
                rows: vec![],
                aggregates: vec![],
            },
            failures: vec![],
            wall_clock_seconds: 0.0,
            artifact_paths: vec![],
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plot_data(&report, dir.path()).is_err());
    }

    #[test]
    fn failing_seed_aborts_unless_keep_going() {
        let f = |s: u64| if s == 2 { Err(Error::ConstantModel) } else { Ok(s) };
        assert!(matches!(per_seed(&[1, 2, 3], false, f), Err(Error::Seed { seed: 2, .. })));
        let (rows, fails) = per_seed(&[3, 2, 1], true, f).unwrap();
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(fails[0].seed, 2);
    }
}
