use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    class_histogram, resample_to_frequency, uniform_frequencies, validate_frequency,
    ClassDistribution, LabeledDataset, Sample,
};
use crate::apportion;
use crate::error::{Error, Result};
use crate::seed;

/// How client data volumes are distributed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SizeProfile {
    Even,
    /// Client `i` (1-based) holds a share proportional to `i^(-exponent)`.
    PowerLaw { exponent: f64 },
}

/// How each client's class mix relates to the pooled mix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalProfile {
    /// Every client mirrors the global class distribution up to rounding.
    Balanced,
    /// Clients draw without replacement from the shuffled pool.
    Random,
}

/// Class mix of the union of all client data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "freq", rename_all = "snake_case")]
pub enum GlobalProfile {
    Balanced,
    Frequency(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionProfile {
    pub size: SizeProfile,
    pub local: LocalProfile,
    pub global: GlobalProfile,
    /// Total samples handed out. `None` takes the largest total the source
    /// data can supply at the requested global frequencies.
    pub total: Option<usize>,
}

impl Default for PartitionProfile {
    fn default() -> Self {
        PartitionProfile {
            size: SizeProfile::Even,
            local: LocalProfile::Random,
            global: GlobalProfile::Balanced,
            total: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientPartition {
    clients: Vec<LabeledDataset>,
    profile: PartitionProfile,
}

impl ClientPartition {
    /// Build from explicit per-client datasets (client id = position).
    pub fn from_clients(clients: Vec<LabeledDataset>, profile: PartitionProfile) -> Result<Self> {
        let first = clients
            .first()
            .ok_or_else(|| Error::config("k", "a partition needs at least one client"))?;
        let (n, d) = (first.num_classes(), first.feature_dim());
        if clients.iter().any(|c| c.num_classes() != n || c.feature_dim() != d) {
            return Err(Error::config("partition", "client datasets disagree on shape"));
        }
        Ok(ClientPartition { clients, profile })
    }

    pub fn clients(&self) -> &[LabeledDataset] {
        &self.clients
    }

    pub fn client(&self, id: usize) -> &LabeledDataset {
        &self.clients[id]
    }

    pub(crate) fn clients_mut(&mut self) -> &mut [LabeledDataset] {
        &mut self.clients
    }

    pub fn profile(&self) -> &PartitionProfile {
        &self.profile
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn num_classes(&self) -> usize {
        self.clients[0].num_classes()
    }

    pub fn feature_dim(&self) -> usize {
        self.clients[0].feature_dim()
    }

    pub fn total_size(&self) -> usize {
        self.clients.iter().map(|c| c.len()).sum()
    }

    pub fn histograms(&self) -> Vec<ClassDistribution> {
        self.clients.iter().map(class_histogram).collect()
    }

    pub fn global_histogram(&self) -> ClassDistribution {
        ClassDistribution::sum(self.num_classes(), &self.histograms())
    }

    pub fn max_id(&self) -> Option<u64> {
        self.clients.iter().filter_map(|c| c.max_id()).max()
    }
}

fn max_feasible_total(counts: &[u64], freq: &[f64]) -> Result<usize> {
    // Start slightly above the float bound and let exact apportionment decide.
    let mut total = counts
        .iter()
        .zip(freq)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&c, &f)| (c as f64 / f).ceil() as u64 + 1)
        .min()
        .unwrap_or(0);
    loop {
        let want = apportion::by_weights(freq, total)?;
        if want.iter().zip(counts).all(|(w, c)| w <= c) {
            return Ok(total as usize);
        }
        total -= 1;
    }
}

fn client_sizes(profile: &SizeProfile, k: usize, total: usize) -> Result<Vec<u64>> {
    match profile {
        SizeProfile::Even => apportion::by_counts(&vec![1; k], total as u64),
        SizeProfile::PowerLaw { exponent } => {
            if !exponent.is_finite() || *exponent < 0.0 {
                return Err(Error::config("power_law_exponent", "must be finite and >= 0"));
            }
            // Every client keeps at least one sample; the rest follows the power law.
            let weights: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-exponent)).collect();
            let extra = apportion::by_weights(&weights, (total - k) as u64)?;
            Ok(extra.into_iter().map(|e| e + 1).collect())
        }
    }
}

/// Order samples so that any contiguous run is stratified by class: the j-th
/// of `C` samples of a class is keyed at `(j + 0.5) / C`.
fn stratified_order(samples: Vec<Sample>, num_classes: usize) -> Vec<Sample> {
    let mut per_class = vec![0usize; num_classes];
    for s in &samples {
        per_class[s.label] += 1;
    }
    let mut seen = vec![0usize; num_classes];
    let mut keyed: Vec<(f64, usize, Sample)> = samples
        .into_iter()
        .map(|s| {
            let j = seen[s.label];
            seen[s.label] += 1;
            ((j as f64 + 0.5) / per_class[s.label] as f64, s.label, s)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, s)| s).collect()
}

/// Split `data` across `k` clients following `profile`.
///
/// The global profile is applied first by resampling without replacement;
/// sizes and per-client class mixes then carve that pool into disjoint shards.
pub fn partition_clients(
    data: &LabeledDataset,
    k: usize,
    profile: &PartitionProfile,
    seed: u64,
) -> Result<ClientPartition> {
    if k == 0 {
        return Err(Error::config("k", "must be >= 1"));
    }
    let n = data.num_classes();
    let freq = match &profile.global {
        GlobalProfile::Balanced => uniform_frequencies(n),
        GlobalProfile::Frequency(f) => {
            validate_frequency(f, n)?;
            f.clone()
        }
    };
    let total = match profile.total {
        Some(t) => t,
        None => max_feasible_total(class_histogram(data).counts(), &freq)?,
    };
    if k > total {
        return Err(Error::config(
            "k",
            format!("{k} clients exceed the {total} samples available"),
        ));
    }
    let pool = resample_to_frequency(data, &freq, total, seed)?;
    let mut rng = seed::rng(seed, &[seed::tag::PARTITION]);
    let mut samples = pool.into_samples();
    samples.shuffle(&mut rng);
    if profile.local == LocalProfile::Balanced {
        samples = stratified_order(samples, n);
    }

    let sizes = client_sizes(&profile.size, k, total)?;
    let mut rest = samples.into_iter();
    let clients = sizes
        .iter()
        .map(|&size| {
            let shard: Vec<Sample> = rest.by_ref().take(size as usize).collect();
            LabeledDataset::with_dim(shard, n, data.feature_dim())
        })
        .collect::<Result<Vec<_>>>()?;
    ClientPartition::from_clients(clients, profile.clone())
}
