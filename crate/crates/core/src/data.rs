//! Labeled image datasets with per-sample binary attributes.
//!
//! Desk-scale experiments run on synthetic imagery: each class owns a
//! smooth sinusoidal base pattern, each binary attribute adds its own
//! pattern when set, and every sample carries idiosyncratic pixel noise
//! (which is what membership inference can latch onto).

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::scalar::Scalar;
use crate::tensor::{Dims, Tensor3};

/// Generator parameters for a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    /// Descriptor name recorded in provenance.
    pub name: String,
    pub classes: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub samples: usize,
    /// Binary attribute names; each sample gets an i.i.d. fair draw per attribute.
    #[serde(default)]
    pub attributes: Vec<String>,
    /// Amplitude of the shared per-class pattern.
    #[serde(default = "default_signal")]
    pub signal: f64,
    /// Amplitude of each sample's own smooth pattern. Larger values make
    /// samples individually recognizable, which is what overfitting—and
    /// hence membership leakage—feeds on.
    #[serde(default)]
    pub signature: f64,
    /// Std of per-sample i.i.d. pixel noise.
    pub noise: f64,
    pub seed: u64,
    /// Stream for the class/attribute patterns themselves; defaults to
    /// `seed`. Two datasets sharing a pattern seed draw the same per-class
    /// patterns (prefix-aligned), which makes one a natural pre-training
    /// distribution for the other under the hard-coded mapping.
    #[serde(default)]
    pub pattern_seed: Option<u64>,
    /// Amplitude of an extra per-class wave drawn from `seed` (not the
    /// pattern seed): distorts this dataset's classes away from the shared
    /// patterns, so a frozen model needs prompting to close the gap.
    #[serde(default)]
    pub pattern_jitter: f64,
}

fn default_signal() -> f64 {
    0.35
}

impl SynthSpec {
    pub fn dims(&self) -> Dims {
        Dims::new(self.channels, self.height, self.width)
    }
}

/// In-memory dataset: images plus labels, ids, and binary attributes.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub descriptor: String,
    pub dims: Dims,
    pub classes: usize,
    pub images: Vec<Tensor3<T>>,
    pub labels: Vec<usize>,
    pub ids: Vec<u64>,
    pub attribute_names: Vec<String>,
    /// `attr_values[sample][attribute]` in {0,1}.
    pub attr_values: Vec<Vec<u8>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Positional index of an attribute name.
    pub fn attribute_index(&self, name: &str) -> Result<usize> {
        self.attribute_names
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| Error::Input(format!("dataset has no attribute named '{name}'")))
    }

    /// View of the samples at `indices` (borrowing the dataset).
    pub fn subset<'a>(&'a self, indices: &'a [usize]) -> SubsetView<'a, T> {
        SubsetView {
            dataset: self,
            indices,
        }
    }
}

/// Borrowed selection of dataset rows.
#[derive(Clone, Copy)]
pub struct SubsetView<'a, T> {
    pub dataset: &'a Dataset<T>,
    pub indices: &'a [usize],
}

impl<'a, T: Scalar> SubsetView<'a, T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn image(&self, i: usize) -> &'a Tensor3<T> {
        &self.dataset.images[self.indices[i]]
    }

    pub fn label(&self, i: usize) -> usize {
        self.dataset.labels[self.indices[i]]
    }
}

struct WavePattern {
    fy: f64,
    fx: f64,
    phase: f64,
    amp: f64,
}

impl WavePattern {
    fn draw(rng: &mut impl Rng, amp: f64) -> Self {
        Self {
            fy: rng.random_range(1.0..4.0),
            fx: rng.random_range(1.0..4.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            amp,
        }
    }

    fn at(&self, y: f64, x: f64) -> f64 {
        self.amp * (std::f64::consts::TAU * (self.fy * y + self.fx * x) + self.phase).sin()
    }
}

/// Generate the dataset described by `spec`; fully determined by `spec.seed`.
pub fn generate<T: Scalar>(spec: &SynthSpec) -> Result<Dataset<T>> {
    if spec.classes == 0 || spec.samples == 0 || spec.dims().is_empty() {
        return Err(Error::Config(format!(
            "synthetic spec '{}' needs positive classes, samples, and dims",
            spec.name
        )));
    }
    let dims = spec.dims();
    let mut pattern_rng = rng_for(spec.pattern_seed.unwrap_or(spec.seed), &[0x64_61_74_61]);
    let mut rng = rng_for(spec.seed, &[0x73_61_6d_70]);

    // one pattern per (class, channel) and per (attribute, channel)
    let class_patterns: Vec<Vec<WavePattern>> = (0..spec.classes)
        .map(|_| {
            (0..spec.channels)
                .map(|_| WavePattern::draw(&mut pattern_rng, spec.signal))
                .collect()
        })
        .collect();
    let attr_patterns: Vec<Vec<WavePattern>> = (0..spec.attributes.len())
        .map(|_| {
            (0..spec.channels)
                .map(|_| WavePattern::draw(&mut pattern_rng, 0.20))
                .collect()
        })
        .collect();
    let jitter_patterns: Option<Vec<Vec<WavePattern>>> = (spec.pattern_jitter > 0.0).then(|| {
        (0..spec.classes)
            .map(|_| {
                (0..spec.channels)
                    .map(|_| WavePattern::draw(&mut rng, spec.pattern_jitter))
                    .collect()
            })
            .collect()
    });

    let noise = Normal::new(0.0, spec.noise.max(0.0))
        .map_err(|e| Error::Config(format!("invalid noise std {}: {e}", spec.noise)))?;

    let mut images = Vec::with_capacity(spec.samples);
    let mut labels = Vec::with_capacity(spec.samples);
    let mut ids = Vec::with_capacity(spec.samples);
    let mut attr_values = Vec::with_capacity(spec.samples);

    for sample in 0..spec.samples {
        let label = rng.random_range(0..spec.classes);
        let attrs: Vec<u8> = (0..spec.attributes.len())
            .map(|_| u8::from(rng.random::<bool>()))
            .collect();
        let signature: Option<Vec<WavePattern>> = (spec.signature > 0.0).then(|| {
            (0..spec.channels)
                .map(|_| WavePattern::draw(&mut rng, spec.signature))
                .collect()
        });
        let mut img = Tensor3::<T>::zeros(dims);
        for c in 0..spec.channels {
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let fy = y as f64 / spec.height as f64;
                    let fx = x as f64 / spec.width as f64;
                    let mut v = 0.5 + class_patterns[label][c].at(fy, fx);
                    if let Some(jitter) = &jitter_patterns {
                        v += jitter[label][c].at(fy, fx);
                    }
                    for (a, set) in attrs.iter().enumerate() {
                        if *set == 1 {
                            v += attr_patterns[a][c].at(fy, fx);
                        }
                    }
                    if let Some(sig) = &signature {
                        v += sig[c].at(fy, fx);
                    }
                    v += noise.sample(&mut rng);
                    *img.at_mut(c, y, x) = T::from_f64_lossy(v.clamp(0.0, 1.0));
                }
            }
        }
        images.push(img);
        labels.push(label);
        ids.push(sample as u64);
        attr_values.push(attrs);
    }

    Ok(Dataset {
        descriptor: spec.name.clone(),
        dims,
        classes: spec.classes,
        images,
        labels,
        ids,
        attribute_names: spec.attributes.clone(),
        attr_values,
    })
}

/// Write the per-sample index (id, class label, binary attributes) as CSV.
pub fn write_index<T: Scalar>(dataset: &Dataset<T>, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["sample_id".to_string(), "label".to_string()];
    header.extend(dataset.attribute_names.iter().cloned());
    writer.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut rec = vec![dataset.ids[i].to_string(), dataset.labels[i].to_string()];
        rec.extend(dataset.attr_values[i].iter().map(|v| v.to_string()));
        writer.write_record(&rec)?;
    }
    writer.flush()?;
    Ok(())
}

/// Index rows as read back from a dataset index file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexRecord {
    pub sample_id: u64,
    pub label: usize,
    pub attributes: Vec<u8>,
}

pub fn read_index(path: &Path) -> Result<(Vec<String>, Vec<IndexRecord>)> {
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    if header.len() < 2 || &header[0] != "sample_id" || &header[1] != "label" {
        return Err(Error::Format(format!(
            "index file {} must start with sample_id,label columns",
            path.display()
        )));
    }
    let attr_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let parse = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Format(format!("bad {what} value '{s}'")))
        };
        let sample_id = parse(&record[0], "sample_id")?;
        let label = parse(&record[1], "label")? as usize;
        let attributes = record
            .iter()
            .skip(2)
            .map(|s| parse(s, "attribute").map(|v| v as u8))
            .collect::<Result<Vec<u8>>>()?;
        rows.push(IndexRecord {
            sample_id,
            label,
            attributes,
        });
    }
    Ok((attr_names, rows))
}

/// Disjoint pool split by fractions (e.g. target/shadow/validation).
pub fn split_fractions(
    len: usize,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let total: f64 = fractions.iter().sum();
    if fractions.is_empty() || fractions.iter().any(|&f| f <= 0.0) || total > 1.0 + 1e-9 {
        return Err(Error::Config(format!(
            "split fractions {fractions:?} must be positive and sum to at most 1"
        )));
    }
    let mut order: Vec<usize> = (0..len).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng_for(seed, &[0x73_70_6c_69_74]));
    let mut out = Vec::with_capacity(fractions.len());
    let mut start = 0usize;
    for (i, &f) in fractions.iter().enumerate() {
        let take = if i + 1 == fractions.len() && (total - 1.0).abs() < 1e-9 {
            len - start
        } else {
            (f * len as f64).floor() as usize
        };
        if start + take > len {
            return Err(Error::Config("split fractions oversubscribe pool".into()));
        }
        out.push(order[start..start + take].to_vec());
        start += take;
    }
    Ok(out)
}
