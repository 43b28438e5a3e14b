//! Membership inference against released prompts.
//!
//! Three attack families over a four-way data split: NN-based (top-5
//! posterior MLP), metric-based (per-class score thresholds for
//! correctness, confidence, entropy, and modified entropy), and
//! gradient-based (white-box bundles through four sub-encoders).

mod analysis;
mod attacks;
mod features;
mod metrics;
mod thresholds;

pub use analysis::{overfitting_level, pearson};
pub use attacks::{
    evaluate_mia, train_gradient_attack, train_nn_attack, AttackHyper, GradientAttack,
    MembershipAttack, NnAttack,
};
pub use features::{
    build_feature_set, gradient_attack_build, nn_attack_build, read_records, write_records,
    AttackRecord, FeaturePayload, FeatureSet,
};
pub use metrics::metric_score;
pub use thresholds::{fit_thresholds, ShadowScore, ThresholdMode, ThresholdTable};

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::rng_for;

/// The four metric-based attack variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Corr,
    Conf,
    Ent,
    Ment,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Corr,
        MetricKind::Conf,
        MetricKind::Ent,
        MetricKind::Ment,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MetricKind::Corr => "corr",
            MetricKind::Conf => "conf",
            MetricKind::Ent => "ent",
            MetricKind::Ment => "ment",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "corr" => Ok(MetricKind::Corr),
            "conf" => Ok(MetricKind::Conf),
            "ent" => Ok(MetricKind::Ent),
            "ment" => Ok(MetricKind::Ment),
            other => Err(Error::Input(format!("unknown metric '{other}'"))),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Attack family names used in result tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackFamily {
    NnBased,
    MetricBased,
    GradientBased,
}

impl AttackFamily {
    pub fn name(&self) -> &'static str {
        match self {
            AttackFamily::NnBased => "nn-based",
            AttackFamily::MetricBased => "metric-based",
            AttackFamily::GradientBased => "gradient-based",
        }
    }
}

impl std::fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The four disjoint index sets of a membership experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiaSplits {
    pub target_train: Vec<usize>,
    pub target_test: Vec<usize>,
    pub shadow_train: Vec<usize>,
    pub shadow_test: Vec<usize>,
}

impl MiaSplits {
    pub fn sizes(&self) -> [usize; 4] {
        [
            self.target_train.len(),
            self.target_test.len(),
            self.shadow_train.len(),
            self.shadow_test.len(),
        ]
    }
}

/// Draw four pairwise-disjoint index sets from `pool`, deterministic per seed.
pub fn make_splits(pool: &[usize], sizes: [usize; 4], seed: u64) -> Result<MiaSplits> {
    let need: usize = sizes.iter().sum();
    if need > pool.len() {
        return Err(Error::Input(format!(
            "split sizes sum to {need} but the pool only has {} samples",
            pool.len()
        )));
    }
    let mut order = pool.to_vec();
    order.shuffle(&mut rng_for(seed, &[0x73_70_6c_74]));
    let mut start = 0usize;
    let mut take = |n: usize| {
        let out = order[start..start + n].to_vec();
        start += n;
        out
    };
    Ok(MiaSplits {
        target_train: take(sizes[0]),
        target_test: take(sizes[1]),
        shadow_train: take(sizes[2]),
        shadow_test: take(sizes[3]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_are_disjoint_and_sized() {
        let pool: Vec<usize> = (0..8000).collect();
        let splits = make_splits(&pool, [2000; 4], 3).unwrap();
        assert_eq!(splits.sizes(), [2000; 4]);
        let mut all: Vec<usize> = splits
            .target_train
            .iter()
            .chain(&splits.target_test)
            .chain(&splits.shadow_train)
            .chain(&splits.shadow_test)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 8000);
    }

    #[test]
    fn small_pool_splits() {
        let pool: Vec<usize> = (0..50).collect();
        let splits = make_splits(&pool, [10; 4], 1).unwrap();
        let mut all: Vec<usize> = splits
            .target_train
            .iter()
            .chain(&splits.target_test)
            .chain(&splits.shadow_train)
            .chain(&splits.shadow_test)
            .copied()
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), 40);
        assert!(make_splits(&pool, [15, 15, 15, 15], 1).is_err());
    }
}
