//! Experiment configuration: TOML file, flag overrides, validation.
//!
//! Unknown keys are rejected everywhere; command-line flags override
//! file keys after parsing.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::continual::{Method, Scenario, Similarity, TrainHyper};
use crate::data::{load_manifest, make_synthetic_cil, make_synthetic_dil, Dataset};
use crate::error::{CoreError, Result};
use crate::nn::{EncoderConfig, InputMode};
use crate::reft::Positions;

/// Dataset source: synthesized streams or a file manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSection {
    SyntheticCil {
        classes: usize,
        dim: usize,
        per_class: usize,
        gap_strength: f64,
        seed: u64,
    },
    SyntheticDil {
        domains: usize,
        classes: usize,
        per_class: usize,
        dim: usize,
        seed: u64,
    },
    Manifest { path: PathBuf },
}

/// Encoder source: a checkpoint path, or inline architecture fields
/// (missing fields fall back to the desk-scale default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub checkpoint: Option<PathBuf>,
    pub depth: Option<usize>,
    pub dim: Option<usize>,
    pub heads: Option<usize>,
    pub mlp_ratio: Option<f64>,
    pub tokens: Option<usize>,
    pub input: Option<InputMode>,
    pub seed: Option<u64>,
}

impl EncoderSection {
    /// Inline architecture with defaults filled in.
    pub fn to_config(&self) -> EncoderConfig {
        let base = EncoderConfig::desk_default();
        EncoderConfig {
            depth: self.depth.unwrap_or(base.depth),
            dim: self.dim.unwrap_or(base.dim),
            heads: self.heads.unwrap_or(base.heads),
            mlp_ratio: self.mlp_ratio.unwrap_or(base.mlp_ratio),
            tokens: self.tokens.unwrap_or(base.tokens),
            input: self.input.unwrap_or(base.input),
            seed: self.seed.unwrap_or(base.seed),
        }
    }
}

/// Intervention placement and size. `layers` defaults to every block;
/// the per-run seed drives initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct InterventionSection {
    pub rank: Option<usize>,
    pub layers: Option<Vec<usize>>,
    pub positions: Option<Positions>,
    pub lambda_orth: Option<f64>,
}

impl InterventionSection {
    /// Fill defaults against an encoder: rank 8, every block, all
    /// token positions; initialization comes from the run seed.
    pub fn resolve(&self, encoder: &EncoderConfig, init_seed: u64) -> crate::reft::InterventionConfig {
        crate::reft::InterventionConfig {
            layers: self
                .layers
                .clone()
                .unwrap_or_else(|| (0..encoder.depth).collect()),
            rank: self.rank.unwrap_or(8),
            positions: self.positions.unwrap_or_default(),
            lambda_orth: self.lambda_orth.unwrap_or(1.0),
            init_seed,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![1993]
}

fn default_alphas() -> Vec<f64> {
    vec![1.0]
}

fn default_kmeans_k() -> usize {
    5
}

fn default_pretrain() -> TrainHyper {
    TrainHyper {
        epochs: 10,
        ..TrainHyper::default()
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("core-reft-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default)]
    pub method: Method,
    /// Classes per task for cil/til streams; ignored for dil.
    pub classes_per_task: Option<usize>,
    #[serde(default = "default_kmeans_k")]
    pub dil_kmeans_k: usize,
    #[serde(default)]
    pub similarity: Similarity,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub intervention: InterventionSection,
    /// First-task adaptation hyperparameters.
    #[serde(default)]
    pub hyper: TrainHyper,
    /// Pretraining hyperparameters (checkpoint-free runs, `pretrain`).
    #[serde(default = "default_pretrain")]
    pub pretrain: TrainHyper,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub rank: Option<usize>,
    pub layers: Option<Vec<usize>>,
    pub alpha: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::io(path.display().to_string(), e))?;
        ExperimentConfig::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CoreError::Config(e.to_string()))
    }

    pub fn apply_overrides(&mut self, ov: &Overrides) {
        if let Some(out) = &ov.out {
            self.out_dir = out.clone();
        }
        if let Some(seed) = ov.seed {
            self.seeds = vec![seed];
        }
        if let Some(alpha) = ov.alpha {
            self.alphas = vec![alpha];
        }
        if let Some(rank) = ov.rank {
            self.intervention.rank = Some(rank);
        }
        if let Some(layers) = &ov.layers {
            self.intervention.layers = Some(layers.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CoreError::Config("seeds must be nonempty".into()));
        }
        if self.alphas.is_empty() {
            return Err(CoreError::Config("alphas must be nonempty".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(CoreError::Config(format!("alpha {a} outside (0, 1]")));
            }
        }
        if self.scenario != Scenario::Dil && self.classes_per_task.is_none() {
            return Err(CoreError::Config(
                "classes_per_task is required for cil/til scenarios".into(),
            ));
        }
        if self.dil_kmeans_k == 0 {
            return Err(CoreError::Config("dil_kmeans_k must be >= 1".into()));
        }
        match (&self.dataset, self.scenario) {
            (DatasetSection::SyntheticDil { .. }, Scenario::Dil) => {}
            (DatasetSection::SyntheticDil { .. }, _) => {
                return Err(CoreError::Config(
                    "synthetic_dil datasets pair with scenario = \"dil\"".into(),
                ));
            }
            (DatasetSection::SyntheticCil { .. }, Scenario::Dil) => {
                return Err(CoreError::Config(
                    "synthetic_cil datasets pair with scenario = \"cil\" or \"til\"".into(),
                ));
            }
            _ => {}
        }
        self.hyper.validate().map_err(to_config_error)?;
        self.pretrain.validate().map_err(to_config_error)?;
        if self.encoder.checkpoint.is_none() {
            self.encoder.to_config().validate()?;
        }
        Ok(())
    }
}

fn to_config_error(e: CoreError) -> CoreError {
    CoreError::Config(e.to_string())
}

/// The datasets a run needs: an optional pretraining base set plus the
/// downstream set the stream is built from.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub base: Option<Dataset>,
    pub downstream: Dataset,
}

pub fn load_dataset(section: &DatasetSection, config_dir: &Path) -> Result<LoadedData> {
    match section {
        DatasetSection::SyntheticCil {
            classes,
            dim,
            per_class,
            gap_strength,
            seed,
        } => {
            let (base, downstream) =
                make_synthetic_cil(*classes, *dim, *per_class, *gap_strength, *seed)?;
            Ok(LoadedData {
                base: Some(base),
                downstream,
            })
        }
        DatasetSection::SyntheticDil {
            domains,
            classes,
            per_class,
            dim,
            seed,
        } => Ok(LoadedData {
            base: None,
            downstream: make_synthetic_dil(*domains, *classes, *per_class, *dim, *seed)?,
        }),
        DatasetSection::Manifest { path } => {
            let resolved = if path.is_absolute() {
                path.clone()
            } else {
                config_dir.join(path)
            };
            Ok(LoadedData {
                base: None,
                downstream: load_manifest(&resolved)?,
            })
        }
    }
}
