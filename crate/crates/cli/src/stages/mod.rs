//! Pipeline stages behind the CLI subcommands.

pub mod defend;
pub mod mia;
pub mod pia;
pub mod pretrain;
pub mod prompt_train;
pub mod report;

use vpaudit_core::data::{generate, Dataset, SynthSpec};
use vpaudit_core::error::{Error, Result};
use vpaudit_core::model_zoo::{load_model, FrozenClassifier};
use vpaudit_core::rng::derive_seed;
use vpaudit_core::vpl::{LabelMap, PromptSpec};

use crate::config::ExperimentConfig;
use crate::paths::RunPaths;

/// Stage seed tags, so every stage draws from its own stream.
pub mod tags {
    pub const PRETRAIN: u64 = 0x01;
    pub const PROMPT_TRAIN: u64 = 0x02;
    pub const PIA_SHADOW: u64 = 0x03;
    pub const PIA_TARGET: u64 = 0x04;
    pub const PIA_ATTACK: u64 = 0x05;
    pub const MIA: u64 = 0x06;
    pub const MIA_STUDY: u64 = 0x07;
    pub const DEFENSE: u64 = 0x08;
    pub const POOLS: u64 = 0x09;
}

/// Everything a stage needs: config, layout, and the effective master seed.
pub struct StageCtx<'a> {
    pub config: &'a ExperimentConfig,
    pub paths: RunPaths,
    pub seed: u64,
}

impl<'a> StageCtx<'a> {
    pub fn new(config: &'a ExperimentConfig, seed_override: Option<u64>) -> Result<Self> {
        let paths = RunPaths::new(&config.out_dir);
        paths.ensure_all()?;
        Ok(Self {
            config,
            paths,
            seed: seed_override.unwrap_or(config.seed),
        })
    }

    pub fn stage_seed(&self, tag: u64) -> u64 {
        derive_seed(self.seed, &[tag])
    }

    /// Load a model from this run's registry, failing with a registry error
    /// before any training starts.
    pub fn model(&self, model_id: &str) -> Result<FrozenClassifier<f32>> {
        load_model(&self.paths.registry(), model_id)
    }

    /// Generate a named dataset and persist its index file.
    pub fn dataset(&self, spec: &SynthSpec) -> Result<Dataset<f32>> {
        let dataset = generate::<f32>(spec)?;
        let index_path = self
            .paths
            .datasets()
            .join(format!("{}-index.csv", spec.name));
        vpaudit_core::data::write_index(&dataset, &index_path)?;
        Ok(dataset)
    }

    /// The main downstream dataset.
    pub fn main_dataset(&self) -> Result<Dataset<f32>> {
        self.dataset(&self.config.dataset)
    }

    /// Target/shadow/validation pools over a dataset.
    pub fn pools(&self, dataset_len: usize) -> Result<[Vec<usize>; 3]> {
        let parts = vpaudit_core::data::split_fractions(
            dataset_len,
            &self.config.split,
            self.stage_seed(tags::POOLS),
        )?;
        let [a, b, c]: [Vec<usize>; 3] = parts
            .try_into()
            .map_err(|_| Error::Config("pool split must have three fractions".into()))?;
        Ok([a, b, c])
    }

    /// Prompt geometry for the main dataset.
    pub fn prompt_spec(&self) -> Result<PromptSpec> {
        PromptSpec::new(self.config.prompt.size, self.config.dataset.dims())
    }

    /// Label map from the downstream task onto a model's classes.
    pub fn label_map(&self, model: &FrozenClassifier<f32>) -> Result<LabelMap> {
        LabelMap::new(self.config.dataset.classes, model.num_classes())
    }
}

/// Wrap a stage error with the stage name for diagnostics.
pub fn stage_error(stage: &str, err: Error) -> Error {
    match err {
        Error::Config(m) => Error::Config(format!("[{stage}] {m}")),
        Error::Input(m) => Error::Input(format!("[{stage}] {m}")),
        Error::Registry(m) => Error::Registry(format!("[{stage}] {m}")),
        other => other,
    }
}

/// A section required by a stage was missing from the config.
pub fn missing_section(stage: &str, section: &str) -> Error {
    Error::Config(format!(
        "[{stage}] config lacks the [{section}] section required by this stage"
    ))
}
