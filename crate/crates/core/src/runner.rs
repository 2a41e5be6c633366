//! Executes one configured run and writes its manifest and CSV outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::augmentation::{client_gains, compute_plan, AugmentationPlan, TransformConfig};
use crate::checkpoint::Checkpointer;
use crate::config::{DataSource, RunConfig, RunMode};
use crate::dataset::{
    class_histogram, load_idx_with_shape, make_synthetic, partition_clients, resample_to_frequency,
    uniform_frequencies, ClassDistribution, ClientPartition, LabeledDataset,
};
use crate::engine::{self, proposition_check_identical, sample_clients, RoundReport, RunOutcome};
use crate::error::{Error, Result};
use crate::metrics::{confusion, Summary};
use crate::rescheduler::{kld_report, reschedule, ClientId, MediatorAssignment};

pub const ROUNDS_CSV: &str = "rounds.csv";
pub const KLD_CSV: &str = "kld.csv";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const TRAFFIC_CSV: &str = "traffic.csv";
pub const PROPOSITION_CSV: &str = "proposition.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

/// What a run produced, for printing by the caller.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: RunMode,
    pub final_accuracy: Option<f64>,
    pub initial_accuracy: Option<f64>,
    pub cumulative_bytes: Option<u64>,
    pub max_divergence: Option<f64>,
    pub mean_mediator_kld: Option<f64>,
    pub mean_client_kld: Option<f64>,
    /// Mean wall-clock seconds per round; never written to disk.
    #[serde(skip)]
    pub mean_round_secs: Option<f64>,
    #[serde(skip)]
    pub files: Vec<PathBuf>,
}

impl RunSummary {
    fn new(mode: RunMode) -> Self {
        RunSummary {
            mode,
            final_accuracy: None,
            initial_accuracy: None,
            cumulative_bytes: None,
            max_divergence: None,
            mean_mediator_kld: None,
            mean_client_kld: None,
            mean_round_secs: None,
            files: Vec::new(),
        }
    }

    pub fn cumulative_megabytes(&self) -> Option<f64> {
        self.cumulative_bytes.map(|b| b as f64 / 1e6)
    }
}

#[derive(Serialize)]
struct Software {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize, Default)]
struct Fingerprints {
    train_pool: Option<String>,
    test_set: Option<String>,
    partition: Option<String>,
    trained_partition: Option<String>,
}

#[derive(Serialize)]
struct ScheduleDump {
    round: usize,
    mediators: Vec<Vec<ClientId>>,
    mediator_kld: Option<Summary>,
    client_kld: Summary,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    software: Software,
    seed: u64,
    mode: RunMode,
    config: &'a RunConfig,
    fingerprints: Fingerprints,
    augmentation_plan: Option<AugmentationPlan>,
    schedules: Vec<ScheduleDump>,
    summary: &'a RunSummary,
    outputs: Vec<String>,
}

/// Content hash of a dataset: ids, labels and feature bits in order.
pub fn fingerprint(data: &LabeledDataset) -> String {
    let mut h = Sha256::new();
    hash_dataset(&mut h, data);
    hex::encode(h.finalize())
}

pub fn partition_fingerprint(partition: &ClientPartition) -> String {
    let mut h = Sha256::new();
    for (k, c) in partition.clients().iter().enumerate() {
        h.update((k as u64).to_le_bytes());
        h.update((c.len() as u64).to_le_bytes());
        hash_dataset(&mut h, c);
    }
    hex::encode(h.finalize())
}

fn hash_dataset(h: &mut Sha256, data: &LabeledDataset) {
    for s in data.samples() {
        h.update(s.id.to_le_bytes());
        h.update((s.label as u64).to_le_bytes());
        for x in &s.features {
            h.update(x.to_le_bytes());
        }
    }
}

/// Training pool and balanced test set for a run.
pub struct PreparedData {
    pub train_pool: LabeledDataset,
    pub test_set: LabeledDataset,
    pub image_shape: Option<(usize, usize)>,
}

pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let d = &config.data;
    let seed = config.training.seed;
    let (pool, image_shape) = match d.source {
        DataSource::Synthetic => {
            let counts = vec![d.train_per_class + d.test_per_class; d.num_classes];
            (
                make_synthetic(d.num_classes, &counts, d.feature_dim, d.separation, seed)?,
                None,
            )
        }
        DataSource::Idx => {
            let images = d.idx_images.as_ref().expect("validated");
            let labels = d.idx_labels.as_ref().expect("validated");
            let (data, shape) = load_idx_with_shape(images, labels)?;
            (data, Some(shape))
        }
    };
    let (train_pool, test_set) = pool.split_balanced(d.test_per_class, seed)?;
    Ok(PreparedData {
        train_pool,
        test_set,
        image_shape,
    })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(f))
}

fn write_rounds_csv(path: &Path, reports: &[RoundReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["round", "accuracy", "loss", "bytes_cum"])?;
    for r in reports {
        w.write_record([
            r.round.to_string(),
            r.accuracy.to_string(),
            r.train_loss.to_string(),
            r.cumulative_bytes.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_kld_csv(path: &Path, rows: &[(usize, MediatorAssignment)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["round", "mediator_id", "size", "kld"])?;
    for (round, a) in rows {
        for (i, m) in a.mediators.iter().enumerate() {
            w.write_record([
                round.to_string(),
                i.to_string(),
                m.size().to_string(),
                m.kld().to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn relative_names(out_dir: &Path, files: &[PathBuf]) -> Vec<String> {
    files
        .iter()
        .map(|p| {
            p.strip_prefix(out_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/")
        })
        .collect()
}

/// Execute `config` and write all outputs under `config.output.out_dir`.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let out_dir = &config.output.out_dir;
    create_dir(out_dir)?;
    match config.mode {
        RunMode::Astraea | RunMode::Fedavg => run_training(config, out_dir),
        RunMode::PropositionCheck => run_proposition(config, out_dir),
        RunMode::ScheduleOnly => run_schedule_only(config, out_dir),
    }
}

fn effective_training(config: &RunConfig, image_shape: Option<(usize, usize)>) -> engine::TrainingConfig {
    let mut training = config.training.clone();
    if let (TransformConfig::ImageAffine { width, height, .. }, Some((rows, cols))) =
        (&mut training.transform, image_shape)
    {
        *width = cols;
        *height = rows;
    }
    training
}

fn run_training(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let data = prepare_data(config)?;
    let training = effective_training(config, data.image_shape);
    let partition = partition_clients(
        &data.train_pool,
        training.num_clients,
        &config.data.partition,
        training.seed,
    )?;
    let arch = config
        .model
        .architecture(data.train_pool.feature_dim(), data.train_pool.num_classes());

    let mut checkpointer = match config.output.checkpoint_every {
        Some(every) => Some(Checkpointer::new(out_dir.join("checkpoints"), every)?),
        None => None,
    };
    let outcome: RunOutcome = match checkpointer.as_mut() {
        Some(c) => engine::run(&training, arch, &partition, &data.test_set, c)?,
        None => engine::run(&training, arch, &partition, &data.test_set, &mut ())?,
    };

    let mut files = Vec::new();
    let rounds_path = out_dir.join(ROUNDS_CSV);
    write_rounds_csv(&rounds_path, &outcome.reports)?;
    files.push(rounds_path);

    let kld_rows: Vec<(usize, MediatorAssignment)> = outcome
        .schedules
        .iter()
        .map(|s| (s.round, s.assignment.clone()))
        .collect();
    if config.mode == RunMode::Astraea {
        let kld_path = out_dir.join(KLD_CSV);
        write_kld_csv(&kld_path, &kld_rows)?;
        files.push(kld_path);
    }

    let traffic_path = out_dir.join(TRAFFIC_CSV);
    write_file(&traffic_path, |b| outcome.ledger.write_csv(b))?;
    files.push(traffic_path);

    let matrix = confusion(&outcome.final_weights, &data.test_set)?;
    let confusion_path = out_dir.join(CONFUSION_CSV);
    write_file(&confusion_path, |b| matrix.write_csv(b))?;
    files.push(confusion_path);

    if let Some(c) = &checkpointer {
        files.extend(c.written().iter().cloned());
    }

    let mut summary = RunSummary::new(config.mode);
    summary.final_accuracy = Some(matrix.accuracy());
    summary.initial_accuracy = Some(outcome.initial_accuracy);
    summary.cumulative_bytes = Some(outcome.ledger.cumulative_bytes());
    summary.mean_client_kld = mean(outcome.reports.iter().map(|r| r.client_kld.mean));
    summary.mean_mediator_kld = mean(
        outcome
            .reports
            .iter()
            .filter_map(|r| r.mediator_kld.as_ref().map(|s| s.mean)),
    );
    summary.mean_round_secs = mean(outcome.reports.iter().map(|r| r.wall_clock_secs));

    let schedules = outcome
        .schedules
        .iter()
        .zip(&outcome.reports)
        .map(|(s, r)| ScheduleDump {
            round: s.round,
            mediators: s.assignment.mediators.iter().map(|m| m.clients.clone()).collect(),
            mediator_kld: r.mediator_kld.clone(),
            client_kld: r.client_kld.clone(),
        })
        .collect();
    let fingerprints = Fingerprints {
        train_pool: Some(fingerprint(&data.train_pool)),
        test_set: Some(fingerprint(&data.test_set)),
        partition: Some(partition_fingerprint(&partition)),
        trained_partition: Some(partition_fingerprint(&outcome.trained_partition)),
    };
    finish(config, out_dir, summary, files, fingerprints, outcome.plan, schedules)
}

fn finish(
    config: &RunConfig,
    out_dir: &Path,
    mut summary: RunSummary,
    mut files: Vec<PathBuf>,
    fingerprints: Fingerprints,
    plan: Option<AugmentationPlan>,
    schedules: Vec<ScheduleDump>,
) -> Result<RunSummary> {
    let manifest_path = out_dir.join(MANIFEST_JSON);
    let manifest = RunManifest {
        software: Software {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        },
        seed: config.training.seed,
        mode: config.mode,
        config,
        fingerprints,
        augmentation_plan: plan,
        schedules,
        summary: &summary,
        outputs: relative_names(out_dir, &files),
    };
    let json = serde_json::to_vec_pretty(&manifest)?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))?;
    files.push(manifest_path);
    summary.files = files;
    Ok(summary)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn run_proposition(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let data = prepare_data(config)?;
    let counts = class_histogram(&data.train_pool);
    let per_class = counts.counts().iter().copied().min().unwrap_or(0) as usize;
    let n = data.train_pool.num_classes();
    let reference = resample_to_frequency(
        &data.train_pool,
        &uniform_frequencies(n),
        per_class * n,
        config.training.seed,
    )?;
    let arch = config.model.architecture(reference.feature_dim(), n);
    let result = proposition_check_identical(
        arch,
        &reference,
        config.training.clients_per_round,
        config.training.rounds,
        config.training.learning_rate,
        config.training.seed,
    )?;

    let path = out_dir.join(PROPOSITION_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["round", "divergence"])?;
    for (i, d) in result.divergences.iter().enumerate() {
        w.write_record([(i + 1).to_string(), d.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let mut summary = RunSummary::new(config.mode);
    summary.max_divergence = Some(result.max_divergence);
    let fingerprints = Fingerprints {
        train_pool: Some(fingerprint(&reference)),
        ..Default::default()
    };
    finish(config, out_dir, summary, vec![path], fingerprints, None, Vec::new())
}

fn schedule_histograms(config: &RunConfig) -> Result<(Vec<ClassDistribution>, Option<AugmentationPlan>, Fingerprints)> {
    if let Some(h) = &config.client_histograms {
        let dists = h.iter().cloned().map(ClassDistribution::new).collect();
        return Ok((dists, None, Fingerprints::default()));
    }
    let data = prepare_data(config)?;
    let partition = partition_clients(
        &data.train_pool,
        config.training.num_clients,
        &config.data.partition,
        config.training.seed,
    )?;
    let mut hists = partition.histograms();
    let plan = compute_plan(&partition.global_histogram(), config.training.alpha)?;
    // Augmentation only changes counts, so apply the per-client gains directly.
    for (h, gain) in hists.iter_mut().zip(client_gains(&partition.histograms(), &plan)?) {
        h.add(&ClassDistribution::new(gain));
    }
    let fingerprints = Fingerprints {
        train_pool: Some(fingerprint(&data.train_pool)),
        test_set: Some(fingerprint(&data.test_set)),
        partition: Some(partition_fingerprint(&partition)),
        trained_partition: None,
    };
    Ok((hists, Some(plan), fingerprints))
}

fn run_schedule_only(config: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    let t = &config.training;
    let (hists, plan, fingerprints) = schedule_histograms(config)?;
    let all: BTreeMap<ClientId, ClassDistribution> = hists.into_iter().enumerate().collect();
    let full = if t.static_schedule {
        Some(reschedule(&all, t.gamma)?)
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    let (mut med_means, mut client_means) = (Vec::new(), Vec::new());
    for round in 1..=t.rounds {
        let online = sample_clients(t.num_clients, t.clients_per_round, t.seed, round);
        let dists: BTreeMap<ClientId, ClassDistribution> =
            online.iter().map(|k| (*k, all[k].clone())).collect();
        let assignment = match &full {
            Some(f) => engine::restrict(f, &dists),
            None => reschedule(&dists, t.gamma)?,
        };
        let report = kld_report(&assignment, &dists)?;
        med_means.push(report.mediator.mean);
        client_means.push(report.client.mean);
        dumps.push(ScheduleDump {
            round,
            mediators: assignment.mediators.iter().map(|m| m.clients.clone()).collect(),
            mediator_kld: Some(report.mediator),
            client_kld: report.client,
        });
        rows.push((round, assignment));
    }
    let path = out_dir.join(KLD_CSV);
    write_kld_csv(&path, &rows)?;

    let mut summary = RunSummary::new(config.mode);
    summary.mean_mediator_kld = mean(med_means.into_iter());
    summary.mean_client_kld = mean(client_means.into_iter());
    finish(config, out_dir, summary, vec![path], fingerprints, plan, dumps)
}
