//! Experiment configuration: one TOML file drives every stage.
//!
//! The schema is strict — unknown keys fail the parse — because a silently
//! ignored typo would corrupt a grid study. Stages read the sections they
//! need and error with the stage name when one is missing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vpaudit_core::data::SynthSpec;
use vpaudit_core::error::{Error, Result};
use vpaudit_core::mia::AttackHyper;
use vpaudit_core::pia::PiaAttackHyper;
use vpaudit_core::sampler::{CondValue, PropertyKind, PropertySpec};
use vpaudit_core::tensor::Dims;
use vpaudit_core::vpl::{Schedule, TrainHyper};

/// Root experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task_id: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Downstream task dataset.
    pub dataset: SynthSpec,
    /// Extra named datasets for relaxed-assumption grids.
    #[serde(default)]
    pub dataset_defs: Vec<SynthSpec>,
    /// Disjoint pool fractions for target/shadow/validation (property
    /// inference); the membership pipeline draws its four splits directly.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    pub models: ModelsCfg,
    #[serde(default)]
    pub pretrain: Vec<PretrainCfg>,
    pub prompt: PromptCfg,
    #[serde(default)]
    pub prompt_train: Option<PromptTrainCfg>,
    #[serde(default)]
    pub pia: Option<PiaCfg>,
    #[serde(default)]
    pub mia: Option<MiaCfg>,
    #[serde(default)]
    pub defense: Option<DefenseCfg>,
}

fn default_split() -> [f64; 3] {
    [0.475, 0.475, 0.05]
}

/// Which registry models play the target and shadow roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsCfg {
    pub target: String,
    #[serde(default)]
    pub shadow: Option<String>,
}

impl ModelsCfg {
    pub fn shadow_id(&self) -> &str {
        self.shadow.as_deref().unwrap_or(&self.target)
    }
}

/// One model to create during the pretrain stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainCfg {
    pub model_id: String,
    /// Architecture preset name (cnn-a, cnn-b, cnn-c, cnn-d).
    pub arch: String,
    /// Pre-training dataset.
    pub base_dataset: SynthSpec,
    pub num_classes: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
}

/// Prompt geometry and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptCfg {
    /// Border width p.
    pub size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub schedule: Schedule,
    pub batch: usize,
}

impl PromptCfg {
    pub fn hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.epochs,
            lr: self.lr,
            schedule: self.schedule,
            batch: self.batch,
        }
    }

    pub fn with_epochs(&self, epochs: usize) -> TrainHyper {
        TrainHyper {
            epochs,
            ..self.hyper()
        }
    }
}

/// Single-prompt training job (the prompt-train subcommand).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTrainCfg {
    pub subset_size: usize,
    /// Output file, relative to the run directory.
    pub output: PathBuf,
}

/// One inferable property with its condition values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyCfg {
    pub name: String,
    pub kind: String,
    #[serde(default)]
    pub attribute: Option<String>,
    #[serde(default)]
    pub sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub proportions: Option<Vec<f64>>,
}

impl PropertyCfg {
    pub fn to_spec_values(&self) -> Result<(PropertySpec, Vec<CondValue>)> {
        match self.kind.as_str() {
            "dataset-size" => {
                let sizes = self.sizes.as_ref().ok_or_else(|| {
                    Error::Config(format!("property '{}' needs `sizes`", self.name))
                })?;
                Ok((
                    PropertySpec {
                        name: self.name.clone(),
                        kind: PropertyKind::DatasetSize,
                    },
                    sizes.iter().map(|&n| CondValue::Size(n)).collect(),
                ))
            }
            "binary-attribute-proportion" => {
                let attribute = self.attribute.clone().ok_or_else(|| {
                    Error::Config(format!("property '{}' needs `attribute`", self.name))
                })?;
                let proportions = self.proportions.as_ref().ok_or_else(|| {
                    Error::Config(format!("property '{}' needs `proportions`", self.name))
                })?;
                Ok((
                    PropertySpec {
                        name: self.name.clone(),
                        kind: PropertyKind::BinaryAttributeProportion { attribute },
                    },
                    proportions
                        .iter()
                        .map(|&p| CondValue::Proportion(p))
                        .collect(),
                ))
            }
            other => Err(Error::Config(format!(
                "property '{}' has unknown kind '{other}'",
                self.name
            ))),
        }
    }
}

/// Property inference stage configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiaCfg {
    pub properties: Vec<PropertyCfg>,
    /// Runs per sampling function for the shadow set.
    pub shadow_runs: usize,
    /// Runs per sampling function for the target set.
    pub target_runs: usize,
    /// Subset size when no size property is configured.
    #[serde(default = "default_subset_size")]
    pub default_subset_size: usize,
    /// Attack-model canvas (C, H, W).
    pub canvas: [usize; 3],
    #[serde(default)]
    pub attack: PiaAttackHyper,
    /// Optional relaxed-assumption grids.
    #[serde(default)]
    pub relaxed: Option<RelaxedCfg>,
}

fn default_subset_size() -> usize {
    256
}

impl PiaCfg {
    pub fn canvas_dims(&self) -> Dims {
        Dims::new(self.canvas[0], self.canvas[1], self.canvas[2])
    }
}

/// Relaxed-assumption grid: vary the shadow dataset and/or shadow model
/// against the matched target configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxedCfg {
    /// Dataset names (the main dataset plus entries of `dataset_defs`).
    #[serde(default)]
    pub datasets: Vec<String>,
    /// Registry model ids.
    #[serde(default)]
    pub models: Vec<String>,
}

/// Membership inference stage configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiaCfg {
    /// Sizes of target-train/target-test/shadow-train/shadow-test.
    pub split_sizes: [usize; 4],
    #[serde(default = "default_families")]
    pub families: Vec<String>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<String>,
    #[serde(default)]
    pub attack: AttackHyper,
    #[serde(default)]
    pub relaxed: Option<RelaxedCfg>,
    /// Optional overfitting-factor study grid.
    #[serde(default)]
    pub study: Option<StudyCfg>,
}

fn default_families() -> Vec<String> {
    vec![
        "nn-based".into(),
        "metric-based".into(),
        "gradient-based".into(),
    ]
}

fn default_metrics() -> Vec<String> {
    vec!["corr".into(), "conf".into(), "ent".into(), "ment".into()]
}

/// Overfitting study: (epochs, size) grid with repeated seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyCfg {
    pub epochs_grid: Vec<usize>,
    pub sizes_grid: Vec<usize>,
    pub seeds: usize,
    /// Metric tracked for the correlation analysis.
    #[serde(default = "default_study_metric")]
    pub metric: String,
}

fn default_study_metric() -> String {
    "ment".into()
}

/// Gaussian-noise defense sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseCfg {
    /// "pia" or "mia".
    pub context: String,
    pub sigmas: Vec<f64>,
    /// Also evaluate the adaptive adversary.
    #[serde(default)]
    pub adaptive: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task_id.is_empty() {
            return Err(Error::Config("task_id must not be empty".into()));
        }
        if let Some(defense) = &self.defense {
            if defense.context != "pia" && defense.context != "mia" {
                return Err(Error::Config(format!(
                    "defense context must be 'pia' or 'mia', got '{}'",
                    defense.context
                )));
            }
        }
        for spec in self.all_dataset_specs() {
            if spec.samples == 0 {
                return Err(Error::Config(format!(
                    "dataset '{}' has zero samples",
                    spec.name
                )));
            }
        }
        Ok(())
    }

    /// The main dataset plus every named extra definition.
    pub fn all_dataset_specs(&self) -> Vec<&SynthSpec> {
        let mut out = vec![&self.dataset];
        out.extend(self.dataset_defs.iter());
        out
    }

    pub fn dataset_spec(&self, name: &str) -> Result<&SynthSpec> {
        self.all_dataset_specs()
            .into_iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("no dataset named '{name}' in the config")))
    }

    /// Round-trip the config through TOML (lossless by construction).
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(format!("serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_toml() -> String {
        r#"
task_id = "demo"
seed = 42
out_dir = "runs/demo"

[dataset]
name = "task16"
classes = 4
channels = 3
height = 16
width = 16
samples = 512
attributes = ["male"]
signal = 0.1
signature = 0.35
noise = 0.1
seed = 7

[models]
target = "cnn-d-16"

[[pretrain]]
model_id = "cnn-d-16"
arch = "cnn-d"
num_classes = 8
epochs = 10
lr = 5e-3
batch = 32

[pretrain.base_dataset]
name = "base16"
classes = 8
channels = 3
height = 16
width = 16
samples = 256
signal = 0.2
noise = 0.15
seed = 1001

[prompt]
size = 7
epochs = 100
lr = 20.0
schedule = "cosine"
batch = 8

[mia]
split_sizes = [64, 64, 64, 64]

[defense]
context = "mia"
sigmas = [0.0, 0.2, 0.4]
adaptive = true
"#
        .to_string()
    }

    #[test]
    fn parses_and_roundtrips() {
        let config: ExperimentConfig = toml::from_str(&sample_toml()).unwrap();
        config.validate().unwrap();
        assert_eq!(config.models.shadow_id(), "cnn-d-16");
        let text = config.to_toml().unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn unknown_keys_fail_fast() {
        let bad = sample_toml().replace("[prompt]", "typo_key = 1\n[prompt]");
        let err = toml::from_str::<ExperimentConfig>(&bad);
        assert!(err.is_err());
        let bad2 = sample_toml().replace("size = 7", "size = 7\nspurious = 3");
        assert!(toml::from_str::<ExperimentConfig>(&bad2).is_err());
    }

    #[test]
    fn property_cfg_validation() {
        let p = PropertyCfg {
            name: "size".into(),
            kind: "dataset-size".into(),
            attribute: None,
            sizes: Some(vec![64, 256]),
            proportions: None,
        };
        let (spec, values) = p.to_spec_values().unwrap();
        assert_eq!(spec.name, "size");
        assert_eq!(values.len(), 2);

        let bad = PropertyCfg {
            name: "male".into(),
            kind: "binary-attribute-proportion".into(),
            attribute: None,
            sizes: None,
            proportions: Some(vec![0.3, 0.7]),
        };
        assert!(bad.to_spec_values().is_err());
    }

    #[test]
    fn bad_defense_context_is_rejected() {
        let bad = sample_toml().replace("context = \"mia\"", "context = \"other\"");
        let config: ExperimentConfig = toml::from_str(&bad).unwrap();
        assert!(config.validate().is_err());
    }
}
