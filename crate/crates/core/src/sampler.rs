//! Property-conditioned subset sampling with exact per-cell counts.
//!
//! A condition vector fixes a value for each tracked property (attribute
//! proportions and/or subset size). Joint cell targets are the products of
//! the marginal proportions, integerized by largest-remainder rounding so
//! realized counts are exact, and sampling is without replacement.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;

/// What kind of macro-level statistic a property tracks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PropertyKind {
    /// Fraction of samples with a binary attribute set.
    BinaryAttributeProportion { attribute: String },
    /// Number of samples in the training subset.
    DatasetSize,
}

/// A named property an adversary may try to infer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertySpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: PropertyKind,
}

/// One condition value of a property.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CondValue {
    Proportion(f64),
    Size(usize),
}

impl CondValue {
    /// Stable label string used for attack classes and provenance.
    pub fn label(&self) -> String {
        match self {
            CondValue::Proportion(p) => format!("{p:.2}"),
            CondValue::Size(n) => n.to_string(),
        }
    }
}

/// One attribute-combination cell with its planned count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// (attribute name, required value) pairs in property order.
    pub assignment: Vec<(String, bool)>,
    pub count: usize,
}

impl Cell {
    pub fn describe(&self) -> String {
        if self.assignment.is_empty() {
            return "unconditioned".to_string();
        }
        self.assignment
            .iter()
            .map(|(a, v)| format!("{a}={}", u8::from(*v)))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// A condition vector expanded into exact per-cell counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub conditions: Vec<(String, CondValue)>,
    pub subset_size: usize,
    pub cells: Vec<Cell>,
}

/// Expand condition proportions into integer cell counts summing to `n`.
///
/// Cells enumerate the cross product of the proportion-kind attributes in
/// spec order, attribute-set first; fractional targets are the products of
/// the marginals, rounded by largest remainder with ties broken in cell
/// enumeration order.
pub fn cell_counts(
    specs: &[PropertySpec],
    phi: &[CondValue],
    n: usize,
) -> Result<SamplingPlan> {
    if specs.len() != phi.len() {
        return Err(Error::Input(format!(
            "condition vector has {} entries for {} properties",
            phi.len(),
            specs.len()
        )));
    }
    if n == 0 {
        return Err(Error::Input("subset size must be at least 1".into()));
    }

    let mut proportions: Vec<(String, f64)> = Vec::new();
    for (spec, value) in specs.iter().zip(phi) {
        match (&spec.kind, value) {
            (PropertyKind::BinaryAttributeProportion { attribute }, CondValue::Proportion(p)) => {
                if !(0.0..=1.0).contains(p) || *p <= 0.0 || *p >= 1.0 {
                    return Err(Error::Input(format!(
                        "proportion for '{}' must lie strictly inside (0, 1), got {p}",
                        spec.name
                    )));
                }
                proportions.push((attribute.clone(), *p));
            }
            (PropertyKind::DatasetSize, CondValue::Size(_)) => {}
            _ => {
                return Err(Error::Input(format!(
                    "condition value {value:?} does not fit property '{}'",
                    spec.name
                )));
            }
        }
    }

    let k = proportions.len();
    let num_cells = 1usize << k;
    let mut fractional = Vec::with_capacity(num_cells);
    let mut assignments = Vec::with_capacity(num_cells);
    for idx in 0..num_cells {
        // attribute j is set iff bit (k-1-j) of idx is clear, so the
        // all-set cell comes first and enumeration is lexicographic.
        let mut target = n as f64;
        let mut assignment = Vec::with_capacity(k);
        for (j, (attr, p)) in proportions.iter().enumerate() {
            let set = (idx >> (k - 1 - j)) & 1 == 0;
            target *= if set { *p } else { 1.0 - *p };
            assignment.push((attr.clone(), set));
        }
        fractional.push(target);
        assignments.push(assignment);
    }

    let mut counts: Vec<usize> = fractional.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..num_cells).collect();
    // stable sort keeps enumeration order among equal remainders
    order.sort_by(|&a, &b| {
        let ra = fractional[a] - fractional[a].floor();
        let rb = fractional[b] - fractional[b].floor();
        rb.partial_cmp(&ra).unwrap()
    });
    for &cell in order.iter().take(n - assigned) {
        counts[cell] += 1;
    }

    let cells = assignments
        .into_iter()
        .zip(counts)
        .map(|(assignment, count)| Cell { assignment, count })
        .collect();
    Ok(SamplingPlan {
        conditions: specs
            .iter()
            .zip(phi)
            .map(|(s, v)| (s.name.clone(), *v))
            .collect(),
        subset_size: n,
        cells,
    })
}

/// Draw a subset realizing the plan exactly, without replacement.
///
/// Returns dataset indices; per-cell counts equal the plan's counts on
/// every run, and the draw is deterministic per seed.
pub fn sample_subset<T: Scalar>(
    dataset: &Dataset<T>,
    pool: &[usize],
    plan: &SamplingPlan,
    seed: u64,
) -> Result<Vec<usize>> {
    let attr_indices: Vec<usize> = plan
        .cells
        .first()
        .map(|cell| {
            cell.assignment
                .iter()
                .map(|(attr, _)| dataset.attribute_index(attr))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?
        .unwrap_or_default();

    // bucket the pool by cell, preserving pool order
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); plan.cells.len()];
    for &sample in pool {
        let mut cell_idx = 0usize;
        for &attr_idx in &attr_indices {
            let set = dataset.attr_values[sample][attr_idx] == 1;
            cell_idx = (cell_idx << 1) | usize::from(!set);
        }
        buckets[cell_idx].push(sample);
    }

    let mut out = Vec::with_capacity(plan.subset_size);
    for (cell_idx, cell) in plan.cells.iter().enumerate() {
        let bucket = &mut buckets[cell_idx];
        if bucket.len() < cell.count {
            return Err(Error::Sampling {
                cell: cell.describe(),
                requested: cell.count,
                available: bucket.len(),
            });
        }
        bucket.shuffle(&mut rng_for(seed, &[0x63_65_6c_6c, cell_idx as u64]));
        out.extend_from_slice(&bucket[..cell.count]);
    }
    Ok(out)
}

/// Persisted record of one sampled subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetManifest {
    pub plan: SamplingPlan,
    pub seed: u64,
    pub indices: Vec<usize>,
}

pub fn save_manifest(path: &Path, manifest: &SubsetManifest) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<SubsetManifest> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthSpec};

    fn props() -> Vec<PropertySpec> {
        vec![
            PropertySpec {
                name: "youth".into(),
                kind: PropertyKind::BinaryAttributeProportion {
                    attribute: "young".into(),
                },
            },
            PropertySpec {
                name: "male".into(),
                kind: PropertyKind::BinaryAttributeProportion {
                    attribute: "male".into(),
                },
            },
        ]
    }

    #[test]
    fn worked_expansion_is_exact() {
        let plan = cell_counts(
            &props(),
            &[CondValue::Proportion(0.7), CondValue::Proportion(0.7)],
            2000,
        )
        .unwrap();
        let counts: Vec<usize> = plan.cells.iter().map(|c| c.count).collect();
        assert_eq!(counts, vec![980, 420, 420, 180]);
        assert_eq!(plan.cells[0].describe(), "young=1,male=1");
        assert_eq!(plan.cells[3].describe(), "young=0,male=0");
    }

    #[test]
    fn symmetric_half_split() {
        let plan = cell_counts(&props()[1..], &[CondValue::Proportion(0.5)], 100).unwrap();
        let counts: Vec<usize> = plan.cells.iter().map(|c| c.count).collect();
        assert_eq!(counts, vec![50, 50]);
    }

    /// Brute-force oracle: integer vectors with the given sum minimizing the
    /// L1 distance to the fractional targets.
    fn l1_optimal(targets: &[f64], n: usize) -> f64 {
        fn rec(targets: &[f64], left: usize, acc: f64, best: &mut f64) {
            if targets.len() == 1 {
                let d = acc + (left as f64 - targets[0]).abs();
                if d < *best {
                    *best = d;
                }
                return;
            }
            for take in 0..=left {
                let d = acc + (take as f64 - targets[0]).abs();
                if d < *best {
                    rec(&targets[1..], left - take, d, best);
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(targets, n, 0.0, &mut best);
        best
    }

    #[test]
    fn largest_remainder_matches_l1_brute_force() {
        let plan = cell_counts(
            &props(),
            &[CondValue::Proportion(0.7), CondValue::Proportion(0.3)],
            10,
        )
        .unwrap();
        let counts: Vec<usize> = plan.cells.iter().map(|c| c.count).collect();
        assert_eq!(counts.iter().sum::<usize>(), 10);
        // fractional targets (2.1, 4.9, 0.9, 2.1)
        let targets = [2.1, 4.9, 0.9, 2.1];
        let ours: f64 = counts
            .iter()
            .zip(&targets)
            .map(|(&c, &t)| (c as f64 - t).abs())
            .sum();
        assert!((ours - l1_optimal(&targets, 10)).abs() < 1e-9);
        assert_eq!(counts, vec![2, 5, 1, 2]);
    }

    #[test]
    fn randomized_plans_match_l1_oracle() {
        let mut rng = crate::rng::rng_for(41, &[1]);
        use rand::Rng;
        for _ in 0..100 {
            let phi = [
                CondValue::Proportion(rng.random_range(0.05..0.95)),
                CondValue::Proportion(rng.random_range(0.05..0.95)),
            ];
            let n = rng.random_range(1..40);
            let plan = cell_counts(&props(), &phi, n).unwrap();
            let counts: Vec<usize> = plan.cells.iter().map(|c| c.count).collect();
            assert_eq!(counts.iter().sum::<usize>(), n);
            let (p1, p2) = match (phi[0], phi[1]) {
                (CondValue::Proportion(a), CondValue::Proportion(b)) => (a, b),
                _ => unreachable!(),
            };
            let targets = [
                n as f64 * p1 * p2,
                n as f64 * p1 * (1.0 - p2),
                n as f64 * (1.0 - p1) * p2,
                n as f64 * (1.0 - p1) * (1.0 - p2),
            ];
            let ours: f64 = counts
                .iter()
                .zip(&targets)
                .map(|(&c, &t)| (c as f64 - t).abs())
                .sum();
            assert!(
                (ours - l1_optimal(&targets, n)).abs() < 1e-9,
                "suboptimal rounding for phi=({p1},{p2}) n={n}: {counts:?}"
            );
        }
    }

    fn attr_dataset(samples: usize) -> Dataset<f32> {
        generate(&SynthSpec {
            name: "pool".into(),
            classes: 2,
            channels: 1,
            height: 4,
            width: 4,
            samples,
            attributes: vec!["young".into(), "male".into()],
            signal: 0.35,
            signature: 0.0,
            noise: 0.0,
            seed: 11,
            pattern_seed: None,
            pattern_jitter: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn sampled_subsets_hit_cell_counts_exactly() {
        let ds = attr_dataset(10_000);
        let pool: Vec<usize> = (0..ds.len()).collect();
        let plan = cell_counts(
            &props(),
            &[CondValue::Proportion(0.7), CondValue::Proportion(0.7)],
            2000,
        )
        .unwrap();
        let subset = sample_subset(&ds, &pool, &plan, 77).unwrap();
        assert_eq!(subset.len(), 2000);
        let mut uniq = subset.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 2000, "subset has duplicates");

        let mut realized = [0usize; 4];
        for &s in &subset {
            let young = ds.attr_values[s][0] == 1;
            let male = ds.attr_values[s][1] == 1;
            let cell = (usize::from(!young) << 1) | usize::from(!male);
            realized[cell] += 1;
        }
        assert_eq!(realized, [980, 420, 420, 180]);

        let again = sample_subset(&ds, &pool, &plan, 77).unwrap();
        assert_eq!(subset, again);
        let other = sample_subset(&ds, &pool, &plan, 78).unwrap();
        assert_ne!(subset, other);
    }

    #[test]
    fn exhaustion_returns_a_permutation() {
        let ds = attr_dataset(200);
        let pool: Vec<usize> = (0..ds.len()).collect();
        // empirical proportions of the generated pool
        let young = ds.attr_values.iter().filter(|a| a[0] == 1).count();
        let male_given = |want_young: bool| {
            ds.attr_values
                .iter()
                .filter(|a| (a[0] == 1) == want_young && a[1] == 1)
                .count()
        };
        // build a plan with the exact empirical cell counts
        let mut plan = cell_counts(
            &props(),
            &[CondValue::Proportion(0.5), CondValue::Proportion(0.5)],
            200,
        )
        .unwrap();
        plan.cells[0].count = male_given(true);
        plan.cells[1].count = young - male_given(true);
        plan.cells[2].count = male_given(false);
        plan.cells[3].count = 200 - young - male_given(false);
        let subset = sample_subset(&ds, &pool, &plan, 5).unwrap();
        let mut sorted = subset.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, pool);
    }

    #[test]
    fn infeasible_cell_is_reported_by_name() {
        let ds = attr_dataset(40);
        let pool: Vec<usize> = (0..10).collect();
        let plan = cell_counts(
            &props(),
            &[CondValue::Proportion(0.9), CondValue::Proportion(0.9)],
            50,
        )
        .unwrap();
        match sample_subset(&ds, &pool, &plan, 1) {
            Err(Error::Sampling { cell, .. }) => assert!(cell.contains("young=1")),
            other => panic!("expected sampling error, got {other:?}"),
        }
    }

    #[test]
    fn manifest_roundtrip() {
        let plan = cell_counts(&props()[..1], &[CondValue::Proportion(0.25)], 8).unwrap();
        let manifest = SubsetManifest {
            plan,
            seed: 9,
            indices: vec![4, 8, 15, 16, 23, 42, 0, 1],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("subset.json");
        save_manifest(&path, &manifest).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), manifest);
    }
}
