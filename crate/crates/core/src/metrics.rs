//! Accuracy, confusion matrices, summary statistics and traffic accounting.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{predict, ParameterVector};

pub const DEFAULT_WIRE_BYTES_PER_PARAM: u64 = 4;

/// Mean, median and quartiles (linear interpolation between order statistics).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary {
                count: 0,
                mean: 0.0,
                median: 0.0,
                q1: 0.0,
                q3: 0.0,
            };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let quantile = |q: f64| {
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Summary {
            count: values.len(),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: quantile(0.5),
            q1: quantile(0.25),
            q3: quantile(0.75),
        }
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

/// Closed-form bytes of one FedAvg communication round: `2·c·|w|·width`.
pub fn traffic_fedavg_round(c: usize, num_params: usize, wire_bytes_per_param: u64) -> u64 {
    2 * c as u64 * num_params as u64 * wire_bytes_per_param
}

/// Closed-form bytes of one mediator synchronization round:
/// `2·(⌈c/γ⌉ + c)·|w|·width`.
pub fn traffic_astraea_round(c: usize, gamma: usize, num_params: usize, wire_bytes_per_param: u64) -> u64 {
    2 * (c.div_ceil(gamma) + c) as u64 * num_params as u64 * wire_bytes_per_param
}

/// Counts model transfers during one round as they happen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundTraffic {
    pub down_bytes: u64,
    pub up_bytes: u64,
}

impl RoundTraffic {
    /// A model (or update) travelling away from the server.
    pub fn send_down(&mut self, bytes: u64) {
        self.down_bytes += bytes;
    }

    /// A model (or update) travelling toward the server.
    pub fn send_up(&mut self, bytes: u64) {
        self.up_bytes += bytes;
    }

    pub fn merge(&mut self, other: RoundTraffic) {
        self.down_bytes += other.down_bytes;
        self.up_bytes += other.up_bytes;
    }

    pub fn total(&self) -> u64 {
        self.down_bytes + self.up_bytes
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficEntry {
    /// 0 is reserved for setup messages (distribution declarations).
    pub round: usize,
    pub down_bytes: u64,
    pub up_bytes: u64,
    pub cumulative_bytes: u64,
}

impl TrafficEntry {
    pub fn bytes(&self) -> u64 {
        self.down_bytes + self.up_bytes
    }
}

/// Append-only per-round byte log.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficLedger {
    wire_bytes_per_param: u64,
    entries: Vec<TrafficEntry>,
}

impl TrafficLedger {
    pub fn new(wire_bytes_per_param: u64) -> Result<Self> {
        if wire_bytes_per_param == 0 {
            return Err(Error::config("wire_bytes_per_param", "must be >= 1"));
        }
        Ok(TrafficLedger {
            wire_bytes_per_param,
            entries: Vec::new(),
        })
    }

    pub fn wire_bytes_per_param(&self) -> u64 {
        self.wire_bytes_per_param
    }

    pub fn model_bytes(&self, num_params: usize) -> u64 {
        num_params as u64 * self.wire_bytes_per_param
    }

    pub fn record(&mut self, round: usize, traffic: RoundTraffic) -> &TrafficEntry {
        let cumulative = self.cumulative_bytes() + traffic.total();
        self.entries.push(TrafficEntry {
            round,
            down_bytes: traffic.down_bytes,
            up_bytes: traffic.up_bytes,
            cumulative_bytes: cumulative,
        });
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[TrafficEntry] {
        &self.entries
    }

    pub fn cumulative_bytes(&self) -> u64 {
        self.entries.last().map_or(0, |e| e.cumulative_bytes)
    }

    pub fn entry_for_round(&self, round: usize) -> Option<&TrafficEntry> {
        self.entries.iter().find(|e| e.round == round)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["round", "down_bytes", "up_bytes", "bytes_cum"])?;
        for e in &self.entries {
            w.write_record([
                e.round.to_string(),
                e.down_bytes.to_string(),
                e.up_bytes.to_string(),
                e.cumulative_bytes.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("traffic.csv", e))?;
        Ok(())
    }
}

/// Anything that carries a per-round accuracy and cumulative traffic figure.
pub trait RoundMetrics {
    fn accuracy(&self) -> f64;
    fn cumulative_bytes(&self) -> u64;
}

/// Cumulative bytes at the first round whose accuracy reaches `target`.
pub fn cost_to_target<R: RoundMetrics>(reports: &[R], target: f64) -> Option<u64> {
    reports
        .iter()
        .find(|r| r.accuracy() >= target)
        .map(RoundMetrics::cumulative_bytes)
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.num_classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts
            .chunks(self.num_classes)
            .map(|r| r.iter().sum())
            .collect()
    }

    /// Per-class recall; `None` for classes absent from the test set.
    pub fn recall(&self) -> Vec<Option<f64>> {
        self.row_sums()
            .iter()
            .enumerate()
            .map(|(i, &n)| (n > 0).then(|| self.get(i, i) as f64 / n as f64))
            .collect()
    }

    /// Long format: `true,pred,count` for every cell.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["true", "pred", "count"])?;
        for t in 0..self.num_classes {
            for p in 0..self.num_classes {
                w.write_record([t.to_string(), p.to_string(), self.get(t, p).to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("confusion.csv", e))?;
        Ok(())
    }
}

pub fn confusion(params: &ParameterVector, test_set: &LabeledDataset) -> Result<ConfusionMatrix> {
    if test_set.is_empty() {
        return Err(Error::config("test_set", "confusion matrix needs a nonempty test set"));
    }
    let mut m = ConfusionMatrix::new(test_set.num_classes());
    for s in test_set.samples() {
        m.add(s.label, predict(params, &s.features)?);
    }
    Ok(m)
}
