//! Pipeline configuration.
//!
//! The file is flat TOML: one `key = value` per line, `#` comments, no
//! tables. Every key is optional. Unknown keys are rejected.
//!
//! ```toml
//! seed = 42
//! replicates = 5
//! users = 10
//! groups = 2
//! group_layout = "opposed"
//! experiments = ["baseline", "contrastive", "minmax+contrastive", "embeddings"]
//! ```
//!
//! An experiment label is `baseline` or a `+`-joined set of tokens: at most
//! one scaler (`minmax`, `normalization`, `mehestan`) plus any of
//! `contrastive` and `embeddings`.

use std::fmt;
use std::str::FromStr;

use equirank_core::gbt::GbtConfig;
use equirank_core::ltr::{LossWeights, TrainConfig};
use equirank_core::scaling::{MehestanConfig, ScalerTag};
use equirank_core::simgen::{ArchetypeMix, GroupLayout, MaliciousMode, SimConfig};

use crate::error::{CliError, Result};

/// One row of the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Experiment {
    pub label: String,
    pub scaler: ScalerTag,
    pub contrastive: bool,
    pub embeddings: bool,
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(label: &str) -> Result<Self> {
        let bad = |why: &str| CliError::Usage(format!("experiment `{label}`: {why}"));
        let mut exp = Experiment {
            label: label.to_string(),
            scaler: ScalerTag::None,
            contrastive: false,
            embeddings: false,
        };
        if label == "baseline" {
            return Ok(exp);
        }
        for token in label.split('+') {
            let scaler = match token {
                "minmax" => Some(ScalerTag::MinMax),
                "normalization" => Some(ScalerTag::Normalization),
                "mehestan" => Some(ScalerTag::Mehestan),
                "contrastive" if !exp.contrastive => {
                    exp.contrastive = true;
                    None
                }
                "embeddings" if !exp.embeddings => {
                    exp.embeddings = true;
                    None
                }
                "contrastive" | "embeddings" => return Err(bad("repeated token")),
                other => return Err(bad(&format!("unknown token `{other}`"))),
            };
            if let Some(s) = scaler {
                if exp.scaler != ScalerTag::None {
                    return Err(bad("more than one scaler"));
                }
                exp.scaler = s;
            }
        }
        Ok(exp)
    }
}

impl Experiment {
    /// File-name form of the label.
    pub fn slug(&self) -> String {
        self.label.replace('+', "-")
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// The ten-experiment grid: baseline, contrastive loss, each scaler with and
/// without contrastive loss, and user embeddings with and without it.
pub const DEFAULT_GRID: [&str; 10] = [
    "baseline",
    "contrastive",
    "minmax",
    "minmax+contrastive",
    "normalization",
    "normalization+contrastive",
    "mehestan",
    "mehestan+contrastive",
    "embeddings",
    "embeddings+contrastive",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Each replicate reruns the whole grid on a fresh population with seed `seed + r`.
    pub replicates: usize,
    pub experiments: Vec<Experiment>,
    pub sim: SimConfig,
    pub train_fraction: f64,
    pub train: TrainConfig,
    /// Contrastive weight applied by experiments with the `contrastive` token.
    pub contrastive_weight: f64,
    pub mehestan: MehestanConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            replicates: 1,
            experiments: DEFAULT_GRID.iter().map(|l| l.parse().expect("valid label")).collect(),
            sim: SimConfig {
                n_users: 10,
                archetype_mix: ArchetypeMix::all_neutral(10),
                n_groups: 2,
                ..SimConfig::default()
            },
            train_fraction: 0.8,
            train: TrainConfig::default(),
            contrastive_weight: 1.0,
            mehestan: MehestanConfig::default(),
        }
    }
}

fn int(key: &str, v: &toml::Value) -> Result<u64> {
    v.as_integer()
        .and_then(|i| u64::try_from(i).ok())
        .ok_or_else(|| CliError::Usage(format!("config key `{key}` expects a non-negative integer")))
}

fn float(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(CliError::Usage(format!("config key `{key}` expects a number"))),
    }
}

fn string<'a>(key: &str, v: &'a toml::Value) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| CliError::Usage(format!("config key `{key}` expects a string")))
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        let mut cfg = PipelineConfig::default();
        let (mut conservative, mut extreme, mut malicious) = (0usize, 0usize, 0usize);
        let mut gbt = GbtConfig::default();
        let mut weights = LossWeights::default();
        for (key, v) in &table {
            let k = key.as_str();
            match k {
                "seed" => cfg.seed = int(k, v)?,
                "replicates" => cfg.replicates = int(k, v)? as usize,
                "experiments" => {
                    let list = v
                        .as_array()
                        .ok_or_else(|| CliError::Usage("config key `experiments` expects a list".into()))?;
                    cfg.experiments = list
                        .iter()
                        .map(|e| string(k, e)?.parse())
                        .collect::<Result<_>>()?;
                }
                "users" => cfg.sim.n_users = int(k, v)? as usize,
                "items" => cfg.sim.n_items = int(k, v)? as usize,
                "dim" => cfg.sim.feature_dim = int(k, v)? as usize,
                "per_user" => cfg.sim.comparisons_per_user = int(k, v)? as usize,
                "noise" => cfg.sim.noise_std = float(k, v)?,
                "groups" => cfg.sim.n_groups = int(k, v)? as usize,
                "group_layout" => {
                    cfg.sim.group_layout = match string(k, v)? {
                        "independent" => GroupLayout::Independent,
                        "opposed" => GroupLayout::Opposed,
                        other => return Err(CliError::Usage(format!("unknown group_layout `{other}`"))),
                    }
                }
                "user_spread" => cfg.sim.user_spread = float(k, v)?,
                "conservative" => conservative = int(k, v)? as usize,
                "extreme" => extreme = int(k, v)? as usize,
                "malicious" => malicious = int(k, v)? as usize,
                "malicious_mode" => {
                    cfg.sim.malicious_mode = match string(k, v)? {
                        "sign-flip" => MaliciousMode::SignFlip,
                        "random" => MaliciousMode::Random,
                        other => return Err(CliError::Usage(format!("unknown malicious_mode `{other}`"))),
                    }
                }
                "criterion" => cfg.sim.criterion = string(k, v)?.to_string(),
                "train_fraction" => cfg.train_fraction = float(k, v)?,
                "lr" => cfg.train.learning_rate = float(k, v)?,
                "epochs" => cfg.train.epochs = int(k, v)? as usize,
                "batch_size" => cfg.train.batch_size = int(k, v)? as usize,
                "ranking_margin" => cfg.train.ranking_margin = float(k, v)?,
                "contrastive_margin" => cfg.train.contrastive_margin = float(k, v)?,
                "tie_epsilon" => cfg.train.tie_epsilon = float(k, v)?,
                "embedding_l2" => cfg.train.embedding_l2 = float(k, v)?,
                "mse_weight" => weights.mse = float(k, v)?,
                "ranking_weight" => weights.ranking = float(k, v)?,
                "bce_weight" => weights.bce = float(k, v)?,
                "contrastive_weight" => cfg.contrastive_weight = float(k, v)?,
                "gbt_lambda" => gbt.lambda = float(k, v)?,
                "resilience_w" => cfg.mehestan.resilience_w = float(k, v)?,
                _ => return Err(CliError::Usage(format!("unknown config key `{key}`"))),
            }
        }
        let named = conservative + extreme + malicious;
        if named > cfg.sim.n_users {
            return Err(CliError::Usage(format!(
                "archetype counts ({named}) exceed users ({})",
                cfg.sim.n_users
            )));
        }
        cfg.sim.archetype_mix = ArchetypeMix {
            neutral: cfg.sim.n_users - named,
            conservative,
            extreme,
            malicious,
        };
        cfg.sim.seed = cfg.seed;
        cfg.train.loss_weights = weights;
        cfg.mehestan.gbt = gbt;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(CliError::Usage("replicates must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CliError::Usage("train_fraction must be in (0, 1)".into()));
        }
        if !(self.contrastive_weight >= 0.0 && self.contrastive_weight.is_finite()) {
            return Err(CliError::Usage("contrastive_weight must be non-negative".into()));
        }
        let usage = |e: equirank_core::Error| CliError::Usage(e.to_string());
        self.sim.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.mehestan.gbt.validate().map_err(usage)?;
        if !(self.mehestan.resilience_w > 0.0) {
            return Err(CliError::Usage("resilience_w must be positive".into()));
        }
        Ok(())
    }

    /// Training settings for one experiment.
    pub fn train_config(&self, exp: &Experiment, seed: u64) -> TrainConfig {
        let mut t = self.train;
        t.seed = seed;
        t.use_user_embeddings = exp.embeddings;
        if exp.contrastive {
            t.loss_weights.contrastive = self.contrastive_weight;
        }
        t
    }
}
