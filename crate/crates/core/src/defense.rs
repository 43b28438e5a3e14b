//! Gaussian-noise defense: perturb released prompts and measure the
//! utility/attack trade-off against naive and adaptive adversaries.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::vpl::Prompt;

/// Noise magnitude and stream for one released prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseConfig {
    pub sigma: f64,
    pub seed: u64,
}

/// Add i.i.d. Gaussian noise to the prompt's border cells.
///
/// `sigma == 0` is a bit-exact identity (no stream is consumed); off-border
/// cells stay exactly zero, so the prompt-file invariant survives.
pub fn add_noise<T: Scalar>(prompt: &Prompt<T>, cfg: &DefenseConfig) -> Result<Prompt<T>> {
    if cfg.sigma < 0.0 {
        return Err(Error::Config(format!(
            "noise std must be non-negative, got {}",
            cfg.sigma
        )));
    }
    if cfg.sigma == 0.0 {
        return Ok(prompt.clone());
    }
    let normal = Normal::new(0.0, cfg.sigma)
        .map_err(|e| Error::Config(format!("invalid noise std {}: {e}", cfg.sigma)))?;
    let mut rng = rng_for(cfg.seed, &[0x6e_6f_69_73_65]);
    let mut noised = prompt.clone();
    let spec = *prompt.spec();
    let data = noised.values_mut().data_mut();
    for idx in spec.border_indices() {
        data[idx] = data[idx] + T::from_f64_lossy(normal.sample(&mut rng));
    }
    Ok(noised)
}

/// One measured point of a defense sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DefensePoint {
    /// Prompt utility under the noised release.
    pub utility: f64,
    /// (attack family name, attack accuracy) pairs.
    pub attacks: Vec<(String, f64)>,
}

/// One row of the utility-defense trade-off table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRow {
    /// "pia" or "mia".
    pub context: String,
    pub sigma: f64,
    pub adaptive: bool,
    pub utility: f64,
    pub family: String,
    pub accuracy: f64,
    pub seed: u64,
}

/// Sweep the sigma grid against one adversary kind.
///
/// `eval_point` receives (sigma, adaptive) and returns the utility of the
/// noised release plus per-family attack accuracies; adaptive adversaries
/// are expected to noise their shadow artifacts with the same sigma.
pub fn eval_defense(
    context: &str,
    seed: u64,
    sigmas: &[f64],
    adaptive: bool,
    mut eval_point: impl FnMut(f64, bool) -> Result<DefensePoint>,
) -> Result<Vec<TradeoffRow>> {
    if sigmas.is_empty() {
        return Err(Error::Config("defense sigma grid is empty".into()));
    }
    if let Some(bad) = sigmas.iter().find(|s| **s < 0.0) {
        return Err(Error::Config(format!("negative sigma {bad} in grid")));
    }
    let mut rows = Vec::new();
    for &sigma in sigmas {
        let point = eval_point(sigma, adaptive)?;
        for (family, accuracy) in point.attacks {
            rows.push(TradeoffRow {
                context: context.to_string(),
                sigma,
                adaptive,
                utility: point.utility,
                family,
                accuracy,
                seed,
            });
        }
    }
    Ok(rows)
}
