//! The YAML pipeline configuration. Unknown keys are rejected and every
//! error names the offending key path.

use std::path::{Path, PathBuf};

use glioma_core::losses::{FocalParams, LossKind};
use glioma_core::nn::{AdamConfig, NetworkSpec};
use glioma_core::survival::{ClassThresholds, ForestParams};
use glioma_core::trainer::CascadeConfig;
use glioma_core::SubregionId;
use serde::{Deserialize, Serialize};

use crate::dataset::CaseLayout;
use crate::error::{PipelineError, Result};
use crate::fsutil;
use crate::tables::SurvivalColumns;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    /// Root directory for every stage's outputs.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub survival: SurvivalConfig,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub cases_dir: PathBuf,
    #[serde(default)]
    pub survival_csv: Option<PathBuf>,
    #[serde(default)]
    pub layout: CaseLayout,
    #[serde(default)]
    pub survival_columns: SurvivalColumns,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub encoder_maps: Vec<usize>,
    pub decoder_maps: Vec<usize>,
    pub dense_block_depth: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        let s = NetworkSpec::default();
        NetworkConfig {
            encoder_maps: s.encoder_maps,
            decoder_maps: s.decoder_maps,
            dense_block_depth: s.dense_block_depth,
        }
    }
}

impl NetworkConfig {
    /// The architecture for slices of `height` x `width` pixels.
    pub fn spec(&self, height: usize, width: usize) -> NetworkSpec {
        NetworkSpec {
            height,
            width,
            in_channels: 4,
            encoder_maps: self.encoder_maps.clone(),
            decoder_maps: self.decoder_maps.clone(),
            dense_block_depth: self.dense_block_depth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossName {
    Dice,
    Focal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FocalConfig {
    pub alpha: f64,
    pub gamma: f64,
}

impl Default for FocalConfig {
    fn default() -> Self {
        let p = FocalParams::default();
        FocalConfig {
            alpha: p.alpha,
            gamma: p.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub loss: LossName,
    pub focal: FocalConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub max_steps: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub split_fraction: f64,
    pub threshold: f64,
    pub regions: Vec<SubregionId>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let c = CascadeConfig::default();
        TrainingConfig {
            loss: LossName::Dice,
            focal: FocalConfig::default(),
            epochs: c.epochs,
            batch_size: c.batch_size,
            max_steps: c.max_steps,
            learning_rate: c.optimizer.learning_rate,
            beta1: c.optimizer.beta1,
            beta2: c.optimizer.beta2,
            epsilon: c.optimizer.eps,
            split_fraction: c.split_fraction,
            threshold: c.threshold,
            regions: c.regions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseSelection {
    All,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentationConfig {
    /// Which cases the segment stage labels.
    pub cases: CaseSelection,
    pub batch_size: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            cases: CaseSelection::All,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    GroundTruth,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeaturesConfig {
    /// Labels the survival features are extracted from.
    pub source: LabelSource,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            source: LabelSource::GroundTruth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluationMode {
    /// Predict the cases the model was trained on.
    Resubstitution,
    /// Out-of-fold predictions.
    CrossValidation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurvivalConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub max_features: Option<usize>,
    pub short_below_days: f64,
    pub long_above_days: f64,
    pub evaluation: EvaluationMode,
    pub folds: usize,
}

impl Default for SurvivalConfig {
    fn default() -> Self {
        let f = ForestParams::default();
        let t = ClassThresholds::default();
        SurvivalConfig {
            n_trees: f.n_trees,
            max_depth: f.max_depth,
            min_samples_leaf: f.min_samples_leaf,
            max_features: f.max_features,
            short_below_days: t.short_below,
            long_above_days: t.long_above,
            evaluation: EvaluationMode::Resubstitution,
            folds: 5,
        }
    }
}

impl SurvivalConfig {
    pub fn forest(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
        }
    }

    pub fn thresholds(&self) -> Result<ClassThresholds> {
        ClassThresholds::new(self.short_below_days, self.long_above_days)
            .map_err(|e| PipelineError::config("survival.short_below_days", e))
    }
}

impl PipelineConfig {
    pub fn cascade(&self) -> CascadeConfig {
        let t = &self.training;
        CascadeConfig {
            loss: match t.loss {
                LossName::Dice => LossKind::Dice,
                LossName::Focal => LossKind::Focal(FocalParams {
                    alpha: t.focal.alpha,
                    gamma: t.focal.gamma,
                }),
            },
            epochs: t.epochs,
            batch_size: t.batch_size,
            optimizer: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                eps: t.epsilon,
            },
            max_steps: t.max_steps,
            seed: self.seed,
            split_fraction: t.split_fraction,
            regions: t.regions.clone(),
            threshold: t.threshold,
        }
    }

    /// Semantic checks beyond the schema.
    pub fn validate(&self) -> Result<()> {
        let t = &self.training;
        if t.loss == LossName::Focal {
            FocalParams::new(t.focal.alpha, t.focal.gamma).map_err(|e| PipelineError::config("training.focal", e))?;
        }
        let key = |k: &str| format!("training.{k}");
        if t.batch_size == 0 {
            return Err(PipelineError::config(key("batch_size"), "must be positive"));
        }
        if !(t.learning_rate > 0.0 && t.learning_rate.is_finite()) {
            return Err(PipelineError::config(key("learning_rate"), "must be positive"));
        }
        if !(0.0..1.0).contains(&t.beta1) || !(0.0..1.0).contains(&t.beta2) {
            return Err(PipelineError::config(key("beta1"), "Adam betas must be in [0, 1)"));
        }
        if !(t.epsilon > 0.0) {
            return Err(PipelineError::config(key("epsilon"), "must be positive"));
        }
        if !(t.split_fraction > 0.0 && t.split_fraction < 1.0) {
            return Err(PipelineError::config(key("split_fraction"), "must be in (0, 1)"));
        }
        if !(t.threshold > 0.0 && t.threshold < 1.0) {
            return Err(PipelineError::config(key("threshold"), "must be in (0, 1)"));
        }
        self.cascade().validate().map_err(|e| PipelineError::config(key("regions"), e))?;
        let n = &self.network;
        self.network
            .spec(4 * 4, 4 * 4)
            .validate()
            .map_err(|e| PipelineError::config("network", e))?;
        if n.dense_block_depth == 0 {
            return Err(PipelineError::config("network.dense_block_depth", "must be positive"));
        }
        if self.segmentation.batch_size == 0 {
            return Err(PipelineError::config("segmentation.batch_size", "must be positive"));
        }
        self.survival
            .forest()
            .validate()
            .map_err(|e| PipelineError::config("survival", e))?;
        self.survival.thresholds()?;
        if self.survival.folds < 2 {
            return Err(PipelineError::config("survival.folds", "must be at least 2"));
        }
        Ok(())
    }

    /// Parses YAML text; relative paths are resolved against `base_dir`.
    pub fn from_yaml(text: &str, base_dir: &Path) -> Result<Self> {
        let de = serde_yaml::Deserializer::from_str(text);
        let mut config: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            PipelineError::config(if key == "." { String::new() } else { key }, e.into_inner())
        })?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        resolve(&mut config.data.cases_dir);
        if let Some(p) = config.data.survival_csv.as_mut() {
            resolve(p);
        }
        resolve(&mut config.output_dir);
        config.base_dir = base_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => PipelineError::Dependency { path: path.to_path_buf() },
            _ => PipelineError::io(path, e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_yaml(&text, base)
    }

    /// sha256 of the configuration's canonical JSON form, with paths taken
    /// relative to the configuration file so the hash survives moving the
    /// whole tree.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        let rel = |p: &mut PathBuf| *p = fsutil::relative_path(&self.base_dir, p);
        rel(&mut c.data.cases_dir);
        if let Some(p) = c.data.survival_csv.as_mut() {
            rel(p);
        }
        rel(&mut c.output_dir);
        fsutil::sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }
}
