//! Fixed layout of a run directory.

use std::fs;
use std::path::{Path, PathBuf};

use vpaudit_core::error::Result;

/// Directory layout under a run's output root.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn registry(&self) -> PathBuf {
        self.root.join("registry")
    }

    pub fn datasets(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn prompts(&self) -> PathBuf {
        self.root.join("prompts")
    }

    pub fn features(&self) -> PathBuf {
        self.root.join("features")
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn plots(&self) -> PathBuf {
        self.report().join("plots")
    }

    pub fn ensure_all(&self) -> Result<()> {
        for dir in [
            self.registry(),
            self.datasets(),
            self.prompts(),
            self.features(),
            self.results(),
            self.plots(),
        ] {
            fs::create_dir_all(dir)?;
        }
        Ok(())
    }
}
