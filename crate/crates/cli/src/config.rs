//! Run configuration: JSON file values, then flag overrides.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tsrcdf::embeddings::{EncoderRole, FinetuneParams};
use tsrcdf::fusion::{FusionConfig, FusionMode};
use tsrcdf::trainer::TrainConfig;
use tsrcdf::transfer::EncoderMode;

use crate::args::{FusionArg, RunArgs};
use crate::error::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteModels {
    pub a: String,
    pub b: String,
}

impl Default for RemoteModels {
    fn default() -> Self {
        Self {
            a: "sbert".into(),
            b: "simcse".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSettings {
    pub roles: Vec<EncoderRole>,
    pub params: FinetuneParams,
}

impl Default for FinetuneSettings {
    fn default() -> Self {
        Self {
            roles: vec![EncoderRole::A, EncoderRole::B],
            params: serde_json::json!({}),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub fusion: Option<FusionConfig>,
    pub dim: Option<usize>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub remote_models: RemoteModels,
    pub finetune: FinetuneSettings,
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data {
        message: format!("{}: {e}", path.display()),
        path: Some(path.display().to_string()),
    })
}

impl RunConfig {
    /// Config file (if any) with `--seed` applied. The seed lands in the
    /// training config too.
    pub fn load(run: &RunArgs) -> Result<Self, CliError> {
        let mut cfg: RunConfig = match &run.config {
            Some(p) => read_json(p)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = run.seed {
            cfg.seed = Some(seed);
        }
        cfg.seed = Some(cfg.seed.unwrap_or(DEFAULT_SEED));
        cfg.train.seed = cfg.seed();
        Ok(cfg)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn fusion(&self, flag: Option<FusionArg>) -> FusionConfig {
        let mut f = self.fusion.unwrap_or_default();
        match flag {
            Some(FusionArg::Six) => f.mode = FusionMode::SixElement,
            Some(FusionArg::Three) => f.mode = FusionMode::ThreeElement,
            None => {}
        }
        f
    }
}

/// Transfer plan as stored on disk. Relative paths resolve against the
/// plan file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    #[serde(default)]
    pub source: Vec<PathBuf>,
    pub target: PathBuf,
    pub n_folds: Option<usize>,
    pub encoder_mode: Option<EncoderMode>,
    pub train_config: Option<TrainConfig>,
    pub seed: Option<u64>,
}

impl PlanFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let mut plan: PlanFile = read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in plan.source.iter_mut().chain(std::iter::once(&mut plan.target)) {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(plan)
    }
}
