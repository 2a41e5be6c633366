//! Labeled datasets, class histograms, synthetic corpora and client partitioning.

mod idx;
mod partition;

pub use idx::{load_idx, load_idx_with_shape, parse_idx};
pub use partition::{
    partition_clients, ClientPartition, GlobalProfile, LocalProfile, PartitionProfile,
    SizeProfile,
};

use std::collections::HashSet;

use rand::seq::{index, SliceRandom};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::apportion;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Unique within a run; augmented copies receive fresh ids.
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Sample>,
    num_classes: usize,
    feature_dim: usize,
}

impl LabeledDataset {
    /// Validates labels against `num_classes` and that all rows have one width.
    pub fn new(samples: Vec<Sample>, num_classes: usize) -> Result<Self> {
        let feature_dim = samples.first().map_or(0, |s| s.features.len());
        Self::with_dim(samples, num_classes, feature_dim)
    }

    pub fn with_dim(samples: Vec<Sample>, num_classes: usize, feature_dim: usize) -> Result<Self> {
        for s in &samples {
            if s.label >= num_classes {
                return Err(Error::config(
                    "dataset",
                    format!("sample {} has label {} >= {num_classes}", s.id, s.label),
                ));
            }
            if s.features.len() != feature_dim {
                return Err(Error::Dimension {
                    context: "dataset feature width",
                    expected: feature_dim,
                    actual: s.features.len(),
                });
            }
        }
        Ok(LabeledDataset {
            samples,
            num_classes,
            feature_dim,
        })
    }

    pub fn empty(num_classes: usize, feature_dim: usize) -> Self {
        LabeledDataset {
            samples: Vec::new(),
            num_classes,
            feature_dim,
        }
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.samples.iter().map(|s| s.id)
    }

    pub fn max_id(&self) -> Option<u64> {
        self.ids().max()
    }

    pub(crate) fn samples_mut(&mut self) -> &mut Vec<Sample> {
        &mut self.samples
    }

    /// Concatenation of several datasets with matching shape.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a LabeledDataset>) -> Result<Self> {
        let mut iter = parts.into_iter().peekable();
        let first = iter
            .peek()
            .ok_or_else(|| Error::config("dataset", "cannot concatenate zero datasets"))?;
        let (n, d) = (first.num_classes, first.feature_dim);
        let mut samples = Vec::new();
        for part in iter {
            if part.num_classes != n || part.feature_dim != d {
                return Err(Error::Dimension {
                    context: "dataset concatenation",
                    expected: d,
                    actual: part.feature_dim,
                });
            }
            samples.extend(part.samples.iter().cloned());
        }
        Ok(LabeledDataset {
            samples,
            num_classes: n,
            feature_dim: d,
        })
    }

    /// Split off `per_class` samples of every class (chosen at random) as a
    /// balanced hold-out set. Returns `(rest, held_out)`.
    pub fn split_balanced(&self, per_class: usize, seed: u64) -> Result<(Self, Self)> {
        let mut rng = seed::rng(seed, &[seed::tag::TEST_SPLIT]);
        let mut held = HashSet::new();
        for (class, pool) in self.indices_by_class().into_iter().enumerate() {
            if pool.len() < per_class {
                return Err(Error::Shortage {
                    class,
                    needed: per_class,
                    available: pool.len(),
                });
            }
            for j in index::sample(&mut rng, pool.len(), per_class) {
                held.insert(pool[j]);
            }
        }
        let (mut rest, mut out) = (Vec::new(), Vec::new());
        for (i, s) in self.samples.iter().enumerate() {
            if held.contains(&i) {
                out.push(s.clone());
            } else {
                rest.push(s.clone());
            }
        }
        Ok((
            LabeledDataset::with_dim(rest, self.num_classes, self.feature_dim)?,
            LabeledDataset::with_dim(out, self.num_classes, self.feature_dim)?,
        ))
    }

    pub(crate) fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, s) in self.samples.iter().enumerate() {
            by_class[s.label].push(i);
        }
        by_class
    }
}

/// Per-class sample counts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassDistribution {
    counts: Vec<u64>,
}

impl ClassDistribution {
    pub fn new(counts: Vec<u64>) -> Self {
        ClassDistribution { counts }
    }

    pub fn zeros(num_classes: usize) -> Self {
        ClassDistribution {
            counts: vec![0; num_classes],
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Normalized counts; all zeros when the distribution is empty.
    pub fn probs(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect()
    }

    /// Entrywise sum. Panics if class counts differ.
    pub fn add(&mut self, other: &ClassDistribution) {
        assert_eq!(self.counts.len(), other.counts.len(), "class count mismatch");
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn sum<'a>(num_classes: usize, parts: impl IntoIterator<Item = &'a ClassDistribution>) -> Self {
        let mut acc = ClassDistribution::zeros(num_classes);
        for p in parts {
            acc.add(p);
        }
        acc
    }
}

pub fn class_histogram(data: &LabeledDataset) -> ClassDistribution {
    let mut counts = vec![0u64; data.num_classes()];
    for s in data.samples() {
        counts[s.label] += 1;
    }
    ClassDistribution::new(counts)
}

/// Gaussian class clusters with unit-variance noise.
///
/// Class means sit at `separation / sqrt(2)` along distinct axes when
/// `feature_dim >= num_classes`, so every pair of means is exactly
/// `separation` apart. With fewer dimensions than classes the means are
/// random directions of the same radius.
pub fn make_synthetic(
    num_classes: usize,
    per_class_counts: &[usize],
    feature_dim: usize,
    separation: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if per_class_counts.len() != num_classes {
        return Err(Error::Dimension {
            context: "per-class counts",
            expected: num_classes,
            actual: per_class_counts.len(),
        });
    }
    if !(separation > 0.0) || !separation.is_finite() {
        return Err(Error::config("separation", "must be finite and > 0"));
    }
    if feature_dim == 0 {
        return Err(Error::config("feature_dim", "must be >= 1"));
    }
    let mut rng = seed::rng(seed, &[seed::tag::SYNTHETIC]);
    let radius = separation / std::f64::consts::SQRT_2;
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            if feature_dim >= num_classes {
                let mut m = vec![0.0; feature_dim];
                m[c] = radius;
                m
            } else {
                let v: Vec<f64> = (0..feature_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm * radius).collect()
            }
        })
        .collect();

    let mut samples = Vec::with_capacity(per_class_counts.iter().sum());
    let mut id = 0u64;
    for (label, (&count, mean)) in per_class_counts.iter().zip(&means).enumerate() {
        for _ in 0..count {
            let features = mean
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + z
                })
                .collect();
            samples.push(Sample { id, features, label });
            id += 1;
        }
    }
    LabeledDataset::with_dim(samples, num_classes, feature_dim)
}

pub(crate) fn validate_frequency(freq: &[f64], num_classes: usize) -> Result<()> {
    if freq.len() != num_classes {
        return Err(Error::Dimension {
            context: "frequency vector",
            expected: num_classes,
            actual: freq.len(),
        });
    }
    if freq.iter().any(|f| !f.is_finite() || *f < 0.0) {
        return Err(Error::Distribution("frequencies must be finite and >= 0".into()));
    }
    let sum: f64 = freq.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Distribution(format!("frequencies sum to {sum}, not 1")));
    }
    Ok(())
}

/// Draw without replacement so that class counts follow the largest-remainder
/// apportionment of `freq * total`. The result is shuffled.
pub fn resample_to_frequency(
    data: &LabeledDataset,
    freq: &[f64],
    total: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    validate_frequency(freq, data.num_classes())?;
    let targets = apportion::by_weights(freq, total as u64)?;
    let mut rng = seed::rng(seed, &[seed::tag::RESAMPLE]);
    let mut out = Vec::with_capacity(total);
    for (class, (pool, &want)) in data.indices_by_class().iter().zip(&targets).enumerate() {
        let want = want as usize;
        if pool.len() < want {
            return Err(Error::Shortage {
                class,
                needed: want,
                available: pool.len(),
            });
        }
        out.extend(
            index::sample(&mut rng, pool.len(), want)
                .into_iter()
                .map(|j| data.samples[pool[j]].clone()),
        );
    }
    out.shuffle(&mut rng);
    LabeledDataset::with_dim(out, data.num_classes(), data.feature_dim())
}

/// English letter frequencies (a..z), normalized to sum to one.
pub fn english_letter_frequencies() -> Vec<f64> {
    const PERCENT: [f64; 26] = [
        8.167, 1.492, 2.782, 4.253, 12.702, 2.228, 2.015, 6.094, 6.966, 0.153, 0.772, 4.025, 2.406,
        6.749, 7.507, 1.929, 0.095, 5.987, 6.327, 9.056, 2.758, 0.978, 2.360, 0.150, 1.974, 0.074,
    ];
    normalize(&PERCENT)
}

/// `f_i ∝ (i + 1)^(-exponent)`.
pub fn zipf_frequencies(num_classes: usize, exponent: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=num_classes).map(|i| (i as f64).powf(-exponent)).collect();
    normalize(&raw)
}

pub fn uniform_frequencies(num_classes: usize) -> Vec<f64> {
    vec![1.0 / num_classes as f64; num_classes]
}

fn normalize(raw: &[f64]) -> Vec<f64> {
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|v| v / sum).collect()
}
