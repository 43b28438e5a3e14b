//! Decision thresholds for metric-based membership inference.
//!
//! Thresholds are fitted on shadow scores to maximize membership accuracy.
//! Candidates are the midpoints of adjacent sorted unique scores plus
//! sentinels beyond both extremes; ties break toward the smaller threshold.
//! Class-wise mode keeps one threshold per downstream class and falls back
//! to the overall threshold for classes the shadow data never produced.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mia::MetricKind;
use crate::scalar::Scalar;

/// One shadow observation: score, true class, membership bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowScore<T> {
    pub score: T,
    pub class: usize,
    pub member: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    ClassWise,
    Overall,
}

/// Fitted decision table for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable<T> {
    pub metric: MetricKind,
    pub mode: ThresholdMode,
    class_thresholds: BTreeMap<usize, T>,
    overall: Option<T>,
}

/// Member when the score is at or above the threshold (conf) or at or
/// below it (ent, ment).
fn member_if_geq(metric: MetricKind) -> bool {
    matches!(metric, MetricKind::Conf)
}

impl<T: Scalar> ThresholdTable<T> {
    /// Membership decision for a score with the given true class.
    ///
    /// corr ignores thresholds entirely (member iff the prediction was
    /// correct), which is what makes it immune to shadow mismatches.
    pub fn decide(&self, score: T, class: usize) -> bool {
        match self.metric {
            MetricKind::Corr => score >= T::from_f64_lossy(0.5),
            metric => {
                let threshold = match self.mode {
                    ThresholdMode::Overall => self.overall,
                    ThresholdMode::ClassWise => {
                        self.class_thresholds.get(&class).copied().or(self.overall)
                    }
                };
                let threshold =
                    threshold.expect("non-corr tables always carry an overall threshold");
                if member_if_geq(metric) {
                    score >= threshold
                } else {
                    score <= threshold
                }
            }
        }
    }

    /// The threshold that would apply to `class` (None for corr).
    pub fn threshold_for(&self, class: usize) -> Option<T> {
        match self.mode {
            ThresholdMode::Overall => self.overall,
            ThresholdMode::ClassWise => self.class_thresholds.get(&class).copied().or(self.overall),
        }
    }

    /// Classes with their own fitted threshold.
    pub fn fitted_classes(&self) -> Vec<usize> {
        self.class_thresholds.keys().copied().collect()
    }

    /// Accuracy of this table over a score set.
    pub fn accuracy(&self, scores: &[ShadowScore<T>]) -> f64 {
        if scores.is_empty() {
            return 0.0;
        }
        let correct = scores
            .iter()
            .filter(|s| self.decide(s.score, s.class) == s.member)
            .count();
        correct as f64 / scores.len() as f64
    }
}

/// Best threshold and its accuracy for one score group.
fn fit_group<T: Scalar>(scores: &[ShadowScore<T>], geq: bool) -> (T, f64) {
    let mut uniq: Vec<T> = scores.iter().map(|s| s.score).collect();
    uniq.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    uniq.dedup();

    let mut candidates = Vec::with_capacity(uniq.len() + 1);
    candidates.push(T::neg_infinity());
    let half = T::from_f64_lossy(0.5);
    for pair in uniq.windows(2) {
        candidates.push((pair[0] + pair[1]) * half);
    }
    candidates.push(T::infinity());

    let mut best_tau = candidates[0];
    let mut best_hits = usize::MIN;
    for &tau in &candidates {
        let hits = scores
            .iter()
            .filter(|s| {
                let decided = if geq { s.score >= tau } else { s.score <= tau };
                decided == s.member
            })
            .count();
        if hits > best_hits {
            best_hits = hits;
            best_tau = tau;
        }
    }
    (best_tau, best_hits as f64 / scores.len() as f64)
}

fn has_both_sides<T>(scores: &[ShadowScore<T>]) -> bool {
    scores.iter().any(|s| s.member) && scores.iter().any(|s| !s.member)
}

/// Fit a decision table on shadow scores.
///
/// In class-wise mode, a class missing either member or non-member shadow
/// scores silently falls back to the overall threshold; the overall fit
/// only requires both sides to be present globally.
pub fn fit_thresholds<T: Scalar>(
    scores: &[ShadowScore<T>],
    metric: MetricKind,
    mode: ThresholdMode,
) -> Result<ThresholdTable<T>> {
    if metric == MetricKind::Corr {
        // member iff score == 1; nothing to fit
        return Ok(ThresholdTable {
            metric,
            mode,
            class_thresholds: BTreeMap::new(),
            overall: None,
        });
    }
    if scores.is_empty() {
        return Err(Error::Input("no shadow scores to fit thresholds on".into()));
    }
    if !has_both_sides(scores) {
        return Err(Error::Input(
            "threshold fitting needs both member and non-member shadow scores".into(),
        ));
    }
    let geq = member_if_geq(metric);
    let (overall, _) = fit_group(scores, geq);

    let mut class_thresholds = BTreeMap::new();
    if mode == ThresholdMode::ClassWise {
        let mut by_class: BTreeMap<usize, Vec<ShadowScore<T>>> = BTreeMap::new();
        for s in scores {
            by_class.entry(s.class).or_default().push(*s);
        }
        for (class, group) in by_class {
            if has_both_sides(&group) {
                let (tau, _) = fit_group(&group, geq);
                class_thresholds.insert(class, tau);
            }
        }
    }

    Ok(ThresholdTable {
        metric,
        mode,
        class_thresholds,
        overall: Some(overall),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(member: &[f64], non_member: &[f64]) -> Vec<ShadowScore<f64>> {
        member
            .iter()
            .map(|&s| ShadowScore {
                score: s,
                class: 0,
                member: true,
            })
            .chain(non_member.iter().map(|&s| ShadowScore {
                score: s,
                class: 0,
                member: false,
            }))
            .collect()
    }

    #[test]
    fn separable_conf_scores_pick_the_midpoint() {
        let set = scores(&[0.9, 0.8], &[0.2, 0.1]);
        let table = fit_thresholds(&set, MetricKind::Conf, ThresholdMode::Overall).unwrap();
        assert_eq!(table.threshold_for(0), Some(0.5));
        assert_eq!(table.accuracy(&set), 1.0);
    }

    #[test]
    fn interleaved_scores_match_best_achievable() {
        // alternating equal-sized groups: no threshold beats one side
        let set = scores(&[0.1, 0.3, 0.5, 0.7], &[0.2, 0.4, 0.6, 0.8]);
        let table = fit_thresholds(&set, MetricKind::Conf, ThresholdMode::Overall).unwrap();
        let acc = table.accuracy(&set);
        // exhaustive sweep over every observed score as threshold
        let mut best = 0usize;
        for &tau in set.iter().map(|s| &s.score) {
            let hits = set
                .iter()
                .filter(|s| (s.score >= tau) == s.member)
                .count();
            best = best.max(hits);
        }
        let sentinel_hits = set.iter().filter(|s| s.member).count(); // tau = -inf
        best = best.max(sentinel_hits).max(set.len() - sentinel_hits);
        assert_eq!(acc, best as f64 / set.len() as f64);
    }

    #[test]
    fn ent_direction_is_member_below() {
        // members have low entropy
        let set: Vec<ShadowScore<f64>> = scores(&[0.05, 0.1], &[1.2, 1.4]);
        let table = fit_thresholds(&set, MetricKind::Ent, ThresholdMode::Overall).unwrap();
        assert_eq!(table.accuracy(&set), 1.0);
        assert!(table.decide(0.01, 0));
        assert!(!table.decide(2.0, 0));
    }

    #[test]
    fn corr_table_is_degenerate() {
        let table =
            fit_thresholds::<f64>(&[], MetricKind::Corr, ThresholdMode::ClassWise).unwrap();
        assert!(table.decide(1.0, 3));
        assert!(!table.decide(0.0, 3));
        assert_eq!(table.threshold_for(0), None);
    }

    #[test]
    fn missing_class_falls_back_to_overall() {
        let mut set = scores(&[0.9, 0.8], &[0.2, 0.1]);
        // class 1 only has member scores -> falls back too
        set.push(ShadowScore {
            score: 0.95,
            class: 1,
            member: true,
        });
        let table = fit_thresholds(&set, MetricKind::Conf, ThresholdMode::ClassWise).unwrap();
        assert_eq!(table.fitted_classes(), vec![0]);
        // class 7 never appeared; decision must still work (overall fallback)
        assert!(table.decide(0.9, 7));
        assert!(!table.decide(0.05, 7));
        assert_eq!(table.threshold_for(7), table.overall);
    }

    #[test]
    fn single_sided_scores_are_rejected() {
        let set: Vec<ShadowScore<f64>> = scores(&[0.9, 0.8], &[]);
        assert!(fit_thresholds(&set, MetricKind::Conf, ThresholdMode::Overall).is_err());
    }

    #[test]
    fn tie_break_prefers_smaller_threshold() {
        // both sentinel -inf and midpoints achieve 0.5 on this symmetric set
        let set = scores(&[0.4], &[0.4]);
        let table = fit_thresholds(&set, MetricKind::Conf, ThresholdMode::Overall).unwrap();
        assert_eq!(table.threshold_for(0), Some(f64::NEG_INFINITY));
    }
}
