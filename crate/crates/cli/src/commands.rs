//! The `equirank` subcommands. Each writes fixed file names into its
//! output directory plus a `<subcommand>.manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use equirank_core::dataset::ComparisonSet;
use equirank_core::equity::build_report;
use equirank_core::gbt::GbtConfig;
use equirank_core::ltr::{predict_all, train, LossWeights, TrainConfig};
use equirank_core::scaling::{mehestan_scale, MehestanConfig, ScaledComparisonSet, ScalerTag};
use equirank_core::simgen::{generate, ArchetypeMix, GroupLayout, MaliciousMode, SimConfig};
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::{usage, CliError, Result};
use crate::io;
use crate::manifest::RunManifest;
use crate::pipeline::run_pipeline;
use crate::scale::apply_scaler;

#[derive(Debug, Parser)]
#[command(name = "equirank", version, about = "Equity-aware pairwise learning to rank")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic voter population with ground truth.
    Simulate(SimulateArgs),
    /// Rescale comparison scores per user.
    Scale(ScaleArgs),
    /// Train the pairwise linear scorer.
    Train(TrainArgs),
    /// Evaluate a model and report per-user equity metrics.
    Audit(AuditArgs),
    /// Run an experiment grid from a config file.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
pub enum LayoutArg {
    Independent,
    Opposed,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
pub enum MaliciousArg {
    SignFlip,
    Random,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct SimulateArgs {
    /// Number of users.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u64).range(1..))]
    pub users: u64,
    /// Number of items.
    #[arg(long, default_value_t = 30, value_parser = clap::value_parser!(u64).range(2..))]
    pub items: u64,
    /// Feature dimension.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    /// Comparisons per user.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_user: u64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Standard deviation of the noise on utility differences.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Number of preference groups; user `k` joins group `k mod groups`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub groups: u64,
    #[arg(long, value_enum, default_value = "independent")]
    pub layout: LayoutArg,
    /// Standard deviation of each user's weight perturbation.
    #[arg(long, default_value_t = 0.05)]
    pub user_spread: f64,
    /// Conservative users (the remaining users are neutral).
    #[arg(long, default_value_t = 0)]
    pub conservative: u64,
    /// Extreme users.
    #[arg(long, default_value_t = 0)]
    pub extreme: u64,
    /// Malicious users.
    #[arg(long, default_value_t = 0)]
    pub malicious: u64,
    #[arg(long, value_enum, default_value = "sign-flip")]
    pub malicious_mode: MaliciousArg,
    #[arg(long, default_value = "quality")]
    pub criterion: String,
    /// Output directory.
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
pub enum ScalerArg {
    None,
    Minmax,
    Normalization,
    Mehestan,
}

impl From<ScalerArg> for ScalerTag {
    fn from(s: ScalerArg) -> Self {
        match s {
            ScalerArg::None => ScalerTag::None,
            ScalerArg::Minmax => ScalerTag::MinMax,
            ScalerArg::Normalization => ScalerTag::Normalization,
            ScalerArg::Mehestan => ScalerTag::Mehestan,
        }
    }
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct ScaleArgs {
    /// Comparisons CSV.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub scaler: ScalerArg,
    /// Keep only this criterion. Required for mehestan when the input has several.
    #[arg(long)]
    pub criterion: Option<String>,
    /// GBT prior strength (mehestan).
    #[arg(long, default_value_t = 0.1)]
    pub gbt_lambda: f64,
    /// Resilience weight W (mehestan).
    #[arg(long, default_value_t = 1.0)]
    pub resilience_w: f64,
    /// Output directory.
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct TrainArgs {
    /// Training comparisons CSV (a `scaler` column is ignored).
    #[arg(long)]
    pub comparisons: PathBuf,
    /// Item features CSV.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub mse: f64,
    #[arg(long, default_value_t = 0.0)]
    pub ranking: f64,
    #[arg(long, default_value_t = 0.0)]
    pub bce: f64,
    #[arg(long, default_value_t = 0.0)]
    pub contrastive: f64,
    #[arg(long, default_value_t = 0.1)]
    pub ranking_margin: f64,
    #[arg(long, default_value_t = 0.3)]
    pub contrastive_margin: f64,
    #[arg(long, default_value_t = 0.05)]
    pub tie_epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Learn a weight offset per user.
    #[arg(long)]
    pub user_embeddings: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub embedding_l2: f64,
    /// Output directory.
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct AuditArgs {
    /// Model JSON written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Test comparisons CSV.
    #[arg(long)]
    pub comparisons: PathBuf,
    /// Item features CSV.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub criterion: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub tie_epsilon: f64,
    /// Output directory.
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Args)]
pub struct PipelineArgs {
    /// Flat key = value config file.
    #[arg(short, long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Scale(a) => scale(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Audit(a) => audit(&a),
        Command::Pipeline(a) => pipeline(&a),
    }
}

fn args_bytes(args: &impl Serialize) -> Vec<u8> {
    serde_json::to_vec(args).expect("arguments serialize")
}

/// Writes every `(name, bytes)` output into `dir`, then the manifest.
fn emit(dir: &Path, mut manifest: RunManifest, outputs: Vec<(&str, Vec<u8>)>) -> Result<()> {
    for (name, bytes) in outputs {
        let path = dir.join(name);
        io::write_atomic(&path, &bytes)?;
        manifest.output_paths.push(path);
    }
    manifest.write(dir)?;
    Ok(())
}

fn only_criterion(set: ComparisonSet, criterion: Option<&str>, path: &Path) -> Result<ComparisonSet> {
    let Some(c) = criterion else {
        return Ok(set);
    };
    let filtered = set.filter_criterion(c);
    if filtered.is_empty() {
        return Err(CliError::Data(format!("{}: no comparisons for criterion `{c}`", path.display())));
    }
    Ok(filtered)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let n_users = a.users as usize;
    let named = (a.conservative + a.extreme + a.malicious) as usize;
    if named > n_users {
        return Err(CliError::Usage(format!(
            "archetype counts ({named}) exceed --users ({n_users})"
        )));
    }
    let cfg = SimConfig {
        n_items: a.items as usize,
        feature_dim: a.dim as usize,
        n_users,
        comparisons_per_user: a.per_user as usize,
        noise_std: a.noise,
        archetype_mix: ArchetypeMix {
            neutral: n_users - named,
            conservative: a.conservative as usize,
            extreme: a.extreme as usize,
            malicious: a.malicious as usize,
        },
        n_groups: a.groups as usize,
        seed: a.seed,
        user_spread: a.user_spread,
        group_layout: match a.layout {
            LayoutArg::Independent => GroupLayout::Independent,
            LayoutArg::Opposed => GroupLayout::Opposed,
        },
        malicious_mode: match a.malicious_mode {
            MaliciousArg::SignFlip => MaliciousMode::SignFlip,
            MaliciousArg::Random => MaliciousMode::Random,
        },
        criterion: a.criterion.clone(),
        ..SimConfig::default()
    };
    usage(cfg.validate())?;
    let (set, features, truth) = generate(&cfg)?;
    let manifest = RunManifest::new("simulate", &args_bytes(a), a.seed);
    emit(
        &a.out_dir,
        manifest,
        vec![
            ("comparisons.csv", io::comparisons_csv(&set)),
            ("features.csv", io::features_csv(&features)),
            ("truth_theta.csv", io::truth_theta_csv(&truth)),
            ("truth_users.csv", io::truth_users_csv(&truth)),
        ],
    )
}

pub fn scale(a: &ScaleArgs) -> Result<()> {
    let tag = ScalerTag::from(a.scaler);
    let mehestan = MehestanConfig {
        gbt: GbtConfig {
            lambda: a.gbt_lambda,
            ..GbtConfig::default()
        },
        resilience_w: a.resilience_w,
        ..MehestanConfig::default()
    };
    usage(mehestan.gbt.validate())?;
    if !(a.resilience_w > 0.0) {
        return Err(CliError::Usage("--resilience-w must be positive".into()));
    }
    let set = only_criterion(io::read_comparisons(&a.input)?, a.criterion.as_deref(), &a.input)?;
    let mut manifest = RunManifest::new("scale", &args_bytes(a), 0);
    manifest.input_paths.push(a.input.clone());

    if tag != ScalerTag::Mehestan {
        let scaled = ScaledComparisonSet {
            set: apply_scaler(&set, tag, &mehestan)?,
            scaler: tag,
        };
        return emit(&a.out_dir, manifest, vec![("scaled.csv", io::scaled_csv(&scaled))]);
    }
    if set.criteria().len() > 1 {
        return Err(CliError::Usage(
            "mehestan writes one affine table per run; pass --criterion".into(),
        ));
    }
    let out = mehestan_scale(&set, &mehestan)?;
    emit(
        &a.out_dir,
        manifest,
        vec![
            ("scaled.csv", io::scaled_csv(&out.scaled)),
            ("affine.csv", io::affine_csv(&out.affine)),
            ("theta.csv", io::individual_scores_csv(&out.scores)),
        ],
    )
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        loss_weights: LossWeights {
            mse: a.mse,
            ranking: a.ranking,
            bce: a.bce,
            contrastive: a.contrastive,
        },
        ranking_margin: a.ranking_margin,
        contrastive_margin: a.contrastive_margin,
        tie_epsilon: a.tie_epsilon,
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: a.seed,
        use_user_embeddings: a.user_embeddings,
        embedding_l2: a.embedding_l2,
    };
    usage(cfg.validate())?;
    let set = only_criterion(
        io::read_comparisons(&a.comparisons)?,
        a.criterion.as_deref(),
        &a.comparisons,
    )?;
    let features = io::read_features(&a.features)?;
    let out = train(&set, &features, &cfg)?;
    let mut manifest = RunManifest::new("train", &args_bytes(a), a.seed);
    manifest.input_paths = vec![a.comparisons.clone(), a.features.clone()];
    emit(
        &a.out_dir,
        manifest,
        vec![
            ("model.json", io::model_json(&out.params)),
            ("loss_trace.csv", io::loss_trace_csv(&out.loss_trace)),
        ],
    )
}

pub fn audit(a: &AuditArgs) -> Result<()> {
    if !(a.tie_epsilon >= 0.0) {
        return Err(CliError::Usage("--tie-epsilon must be non-negative".into()));
    }
    let params = io::read_model(&a.model)?;
    let set = only_criterion(
        io::read_comparisons(&a.comparisons)?,
        a.criterion.as_deref(),
        &a.comparisons,
    )?;
    let features = io::read_features(&a.features)?;
    let predictions = predict_all(&params, &set, &features)?;
    let report = build_report(&predictions, a.tie_epsilon)?;
    let mut manifest = RunManifest::new("audit", &args_bytes(a), 0);
    manifest.input_paths = vec![a.model.clone(), a.comparisons.clone(), a.features.clone()];
    emit(
        &a.out_dir,
        manifest,
        vec![
            ("report.json", io::report_json(&report)),
            ("lorenz.csv", io::lorenz_csv(&report.lorenz)),
        ],
    )
}

pub fn pipeline(a: &PipelineArgs) -> Result<()> {
    let text = fs::read(&a.config).map_err(|e| CliError::io(&a.config, e))?;
    let text_str = std::str::from_utf8(&text)
        .map_err(|_| CliError::Usage(format!("{}: config is not UTF-8", a.config.display())))?;
    let cfg = PipelineConfig::parse(text_str)?;
    let out = run_pipeline(&cfg, &a.out_dir)?;
    let mut manifest = RunManifest::new("pipeline", &text, cfg.seed);
    manifest.input_paths.push(a.config.clone());
    manifest.output_paths = out.files;
    manifest.write(&a.out_dir)?;
    Ok(())
}
