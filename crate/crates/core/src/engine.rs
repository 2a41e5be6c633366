//! Training loops: mediator-based synchronization rounds and the plain
//! FedAvg baseline.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augmentation::{apply_plan, compute_plan, AugmentationPlan, TransformConfig};
use crate::dataset::{class_histogram, ClassDistribution, ClientPartition, LabeledDataset};
use crate::error::{Error, Result};
use crate::metrics::{
    traffic_astraea_round, RoundMetrics, RoundTraffic, Summary, TrafficLedger,
};
use crate::model::{self, loss_and_grad, top1_accuracy, Architecture, Batch, OptimizerKind, OptimizerState, ParameterVector};
use crate::rescheduler::{kld_report, kld_to_uniform, reschedule, ClientId, MediatorAssignment};
use crate::seed;

/// Bytes used to declare one class count during initialization.
pub const DECLARATION_BYTES_PER_CLASS: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Astraea,
    Fedavg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Total clients (K).
    pub num_clients: usize,
    /// Local mini-batch size (B).
    pub batch_size: usize,
    /// Online clients per round (c).
    pub clients_per_round: usize,
    /// Augmentation factor.
    pub alpha: f64,
    /// Mediator capacity.
    pub gamma: usize,
    /// Local epochs (E).
    pub local_epochs: usize,
    /// Mediator epochs (E_m).
    pub mediator_epochs: usize,
    /// Synchronization (or communication) rounds (R).
    pub rounds: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub seed: u64,
    pub mode: Mode,
    pub static_schedule: bool,
    pub wire_bytes_per_param: u64,
    pub parallel_mediators: bool,
    /// Keep the weights of the best-accuracy round as the final model.
    pub stop_at_best_validation: bool,
    pub transform: TransformConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            num_clients: 100,
            batch_size: 20,
            clients_per_round: 50,
            alpha: 0.67,
            gamma: 10,
            local_epochs: 1,
            mediator_epochs: 2,
            rounds: 50,
            optimizer: OptimizerKind::Adam,
            learning_rate: 0.001,
            seed: 0,
            mode: Mode::Astraea,
            static_schedule: false,
            wire_bytes_per_param: crate::metrics::DEFAULT_WIRE_BYTES_PER_PARAM,
            parallel_mediators: true,
            stop_at_best_validation: false,
            transform: TransformConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, constraint: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, constraint))
            }
        };
        check(self.num_clients >= 1, "k", "must be >= 1")?;
        check(
            self.clients_per_round >= 1 && self.clients_per_round <= self.num_clients,
            "c",
            "must satisfy 1 <= c <= k",
        )?;
        check(self.gamma >= 1, "gamma", "must be >= 1")?;
        check(self.batch_size >= 1, "b", "must be >= 1")?;
        check(self.local_epochs >= 1, "local_epochs", "must be >= 1")?;
        check(self.mediator_epochs >= 1, "mediator_epochs", "must be >= 1")?;
        check(self.rounds >= 1, "rounds", "must be >= 1")?;
        check(
            self.alpha.is_finite() && (0.0..=1.0).contains(&self.alpha),
            "alpha",
            "must lie in [0, 1]",
        )?;
        check(
            self.learning_rate.is_finite() && self.learning_rate >= 0.0,
            "lr",
            "must be finite and >= 0",
        )?;
        check(self.wire_bytes_per_param >= 1, "wire_bytes_per_param", "must be >= 1")?;
        Ok(())
    }

    pub fn local_training(&self) -> LocalTraining {
        LocalTraining {
            epochs: self.local_epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
        }
    }
}

/// Hyper-parameters of one client update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
}

/// Seed of the `pass`-th update of `client` in `round`.
pub fn client_seed(base: u64, round: usize, client: ClientId, pass: usize) -> u64 {
    seed::derive(
        base,
        &[seed::tag::CLIENT_TRAIN, round as u64, client as u64, pass as u64],
    )
}

/// `E` shuffled passes of mini-batch updates starting from `w`, with a fresh
/// optimizer state.
pub fn client_update(
    w: &ParameterVector,
    data: &LabeledDataset,
    local: &LocalTraining,
    seed: u64,
) -> Result<ParameterVector> {
    if data.is_empty() {
        return Err(Error::config("client", "client update needs local data"));
    }
    if local.epochs == 0 || local.batch_size == 0 {
        return Err(Error::config("local_epochs", "epochs and batch size must be >= 1"));
    }
    let mut rng = seed::rng(seed, &[]);
    let mut opt = OptimizerState::new(local.optimizer, local.learning_rate)?;
    let mut params = w.clone();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for _ in 0..local.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(local.batch_size) {
            let batch = Batch::from_indices(data, chunk)?;
            let (_, grad) = loss_and_grad(&params, &batch)?;
            opt.step(&mut params, &grad)?;
        }
    }
    Ok(params)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MediatorOutcome {
    /// `w_final - w*`.
    pub delta: ParameterVector,
    pub final_weights: ParameterVector,
    pub traffic: RoundTraffic,
}

/// Pass the weights sequentially through every member for `mediator_epochs`
/// passes and report the accumulated change.
///
/// Traffic: one download from the server, one upload back, and for every
/// member one receive before its first pass and one send after its last.
pub fn mediator_update(
    members: &[(ClientId, &LabeledDataset)],
    w: &ParameterVector,
    mediator_epochs: usize,
    local: &LocalTraining,
    seed: u64,
    round: usize,
    model_bytes: u64,
) -> Result<MediatorOutcome> {
    if members.is_empty() {
        return Err(Error::config("mediator", "mediator has no clients"));
    }
    let mut traffic = RoundTraffic::default();
    traffic.send_down(model_bytes);
    let mut current = w.clone();
    for pass in 0..mediator_epochs {
        for &(client, data) in members {
            if pass == 0 {
                traffic.send_down(model_bytes);
            }
            current = client_update(&current, data, local, client_seed(seed, round, client, pass))?;
            if pass + 1 == mediator_epochs {
                traffic.send_up(model_bytes);
            }
        }
    }
    traffic.send_up(model_bytes);
    Ok(MediatorOutcome {
        delta: current.delta_from(w)?,
        final_weights: current,
        traffic,
    })
}

/// One weighted update in the server average.
#[derive(Clone, Debug)]
pub struct Contribution<'a> {
    /// Fixes the summation order (smallest member client id).
    pub order_key: ClientId,
    pub num_samples: u64,
    pub delta: &'a ParameterVector,
}

/// `base + Σ (n_m / n) Δ_m`, with `n = Σ n_m` over the given contributions,
/// summed in ascending `order_key` so the result does not depend on input order.
pub fn aggregate(base: &ParameterVector, contributions: &[Contribution<'_>]) -> Result<ParameterVector> {
    let n: u64 = contributions.iter().map(|c| c.num_samples).sum();
    if n == 0 {
        return Err(Error::config("aggregate", "no training samples in this round"));
    }
    let mut sorted: Vec<&Contribution<'_>> = contributions.iter().collect();
    sorted.sort_by_key(|c| c.order_key);
    let mut acc = ParameterVector::zeros(base.arch());
    for c in sorted {
        acc.add_scaled(c.num_samples as f64 / n as f64, c.delta)?;
    }
    let mut out = base.clone();
    out.add_scaled(1.0, &acc)?;
    Ok(out)
}

/// The `c` clients online in `round`, ascending.
pub fn sample_clients(num_clients: usize, c: usize, base_seed: u64, round: usize) -> Vec<ClientId> {
    let mut rng = seed::rng(base_seed, &[seed::tag::SAMPLE_CLIENTS, round as u64]);
    let mut ids = index::sample(&mut rng, num_clients, c).into_vec();
    ids.sort_unstable();
    ids
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediatorKld {
    pub mediator_id: usize,
    pub size: usize,
    pub kld: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub accuracy: f64,
    /// Mean cross-entropy of the aggregated model over this round's participants.
    pub train_loss: f64,
    pub mediators: Vec<MediatorKld>,
    pub mediator_kld: Option<Summary>,
    pub client_kld: Summary,
    pub down_bytes: u64,
    pub up_bytes: u64,
    pub round_bytes: u64,
    pub cumulative_bytes: u64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RoundMetrics for RoundReport {
    fn accuracy(&self) -> f64 {
        self.accuracy
    }

    fn cumulative_bytes(&self) -> u64 {
        self.cumulative_bytes
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub round: usize,
    pub assignment: MediatorAssignment,
}

/// Called at the round barrier with the freshly aggregated weights.
pub trait RoundObserver {
    fn on_round(&mut self, report: &RoundReport, weights: &ParameterVector) -> Result<()>;
}

impl RoundObserver for () {
    fn on_round(&mut self, _: &RoundReport, _: &ParameterVector) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    pub reports: Vec<RoundReport>,
    pub initial_weights: ParameterVector,
    pub initial_accuracy: f64,
    /// Weights after every round, in order.
    pub trajectory: Vec<ParameterVector>,
    pub final_weights: ParameterVector,
    pub ledger: TrafficLedger,
    pub plan: Option<AugmentationPlan>,
    pub schedules: Vec<RoundSchedule>,
    /// Client data actually trained on (post-augmentation for mediator runs).
    pub trained_partition: ClientPartition,
}

fn check_inputs(
    config: &TrainingConfig,
    arch: Architecture,
    partition: &ClientPartition,
    test_set: &LabeledDataset,
) -> Result<()> {
    config.validate()?;
    arch.validate()?;
    if partition.num_clients() != config.num_clients {
        return Err(Error::config(
            "k",
            format!(
                "config expects {} clients but the partition has {}",
                config.num_clients,
                partition.num_clients()
            ),
        ));
    }
    if partition.feature_dim() != arch.feature_dim() || test_set.feature_dim() != arch.feature_dim() {
        return Err(Error::Dimension {
            context: "model feature dim",
            expected: arch.feature_dim(),
            actual: partition.feature_dim(),
        });
    }
    if partition.num_classes() != arch.num_classes() || test_set.num_classes() != arch.num_classes() {
        return Err(Error::config("model.classes", "does not match the dataset class count"));
    }
    if test_set.is_empty() {
        return Err(Error::config("test_set", "must be nonempty"));
    }
    if let Some(k) = partition.clients().iter().position(|c| c.is_empty()) {
        return Err(Error::config("partition", format!("client {k} holds no samples")));
    }
    Ok(())
}

fn map_members<T, F>(parallel: bool, items: &[Vec<ClientId>], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[ClientId]) -> Result<T> + Sync + Send,
{
    if parallel {
        items.par_iter().map(|m| f(m)).collect()
    } else {
        items.iter().map(|m| f(m)).collect()
    }
}

fn participants_loss(
    w: &ParameterVector,
    partition: &ClientPartition,
    clients: &[ClientId],
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for &k in clients {
        let data = partition.client(k);
        let batch = Batch::from_dataset(data)?;
        total += model::loss(w, &batch)? * data.len() as f64;
        n += data.len();
    }
    Ok(total / n as f64)
}

struct Tracker<'o> {
    observer: &'o mut dyn RoundObserver,
    reports: Vec<RoundReport>,
    trajectory: Vec<ParameterVector>,
    best: Option<(f64, ParameterVector)>,
    keep_best: bool,
}

impl Tracker<'_> {
    fn push(&mut self, report: RoundReport, w: &ParameterVector) -> Result<()> {
        self.observer.on_round(&report, w)?;
        if self.keep_best && self.best.as_ref().is_none_or(|(a, _)| report.accuracy > *a) {
            self.best = Some((report.accuracy, w.clone()));
        }
        self.reports.push(report);
        self.trajectory.push(w.clone());
        Ok(())
    }
}

/// Mediator-based training: augmentation once, then `R` synchronization rounds
/// of sampling, rescheduling, sequential mediator training and aggregation.
pub fn run_astraea(
    config: &TrainingConfig,
    arch: Architecture,
    partition: &ClientPartition,
    test_set: &LabeledDataset,
) -> Result<RunOutcome> {
    run_astraea_observed(config, arch, partition, test_set, &mut ())
}

pub fn run_astraea_observed(
    config: &TrainingConfig,
    arch: Architecture,
    partition: &ClientPartition,
    test_set: &LabeledDataset,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutcome> {
    check_inputs(config, arch, partition, test_set)?;
    if config.mode != Mode::Astraea {
        return Err(Error::config("mode", "run_astraea requires mode = astraea"));
    }
    let mut ledger = TrafficLedger::new(config.wire_bytes_per_param)?;
    let model_bytes = ledger.model_bytes(arch.num_params());

    // Every client declares its class histogram once.
    let mut setup = RoundTraffic::default();
    setup.send_up(partition.num_clients() as u64 * partition.num_classes() as u64 * DECLARATION_BYTES_PER_CLASS);
    ledger.record(0, setup);

    let plan = compute_plan(&partition.global_histogram(), config.alpha)?;
    let trained = if plan.is_noop() {
        partition.clone()
    } else {
        apply_plan(partition, &plan, &config.transform, config.seed)?
    };
    let histograms: BTreeMap<ClientId, ClassDistribution> =
        trained.histograms().into_iter().enumerate().collect();

    let static_assignment = if config.static_schedule {
        Some(reschedule(&histograms, config.gamma)?)
    } else {
        None
    };

    let local = config.local_training();
    let initial = ParameterVector::init_uniform(arch, config.seed);
    let initial_accuracy = top1_accuracy(&initial, test_set)?;
    let mut w = initial.clone();
    let mut schedules = Vec::new();
    let mut tracker = Tracker {
        observer,
        reports: Vec::new(),
        trajectory: Vec::new(),
        best: None,
        keep_best: config.stop_at_best_validation,
    };

    for round in 1..=config.rounds {
        let started = Instant::now();
        let online = sample_clients(config.num_clients, config.clients_per_round, config.seed, round);
        let online_dists: BTreeMap<ClientId, ClassDistribution> =
            online.iter().map(|&k| (k, histograms[&k].clone())).collect();
        let assignment = match &static_assignment {
            Some(full) => restrict(full, &online_dists),
            None => reschedule(&online_dists, config.gamma)?,
        };
        let groups: Vec<Vec<ClientId>> = assignment.mediators.iter().map(|m| m.clients.clone()).collect();

        let outcomes = map_members(config.parallel_mediators, &groups, |members| {
            let data: Vec<(ClientId, &LabeledDataset)> =
                members.iter().map(|&k| (k, trained.client(k))).collect();
            mediator_update(&data, &w, config.mediator_epochs, &local, config.seed, round, model_bytes)
        })?;

        let mut traffic = RoundTraffic::default();
        let contributions: Vec<Contribution<'_>> = assignment
            .mediators
            .iter()
            .zip(&outcomes)
            .map(|(m, o)| {
                traffic.merge(o.traffic);
                Contribution {
                    order_key: *m.clients.iter().min().expect("nonempty mediator"),
                    num_samples: m.num_samples(),
                    delta: &o.delta,
                }
            })
            .collect();
        w = aggregate(&w, &contributions)?;
        let entry = ledger.record(round, traffic).clone();

        let report = kld_report(&assignment, &online_dists)?;
        let round_report = RoundReport {
            round,
            accuracy: top1_accuracy(&w, test_set)?,
            train_loss: participants_loss(&w, &trained, &online)?,
            mediators: assignment
                .mediators
                .iter()
                .enumerate()
                .map(|(i, m)| MediatorKld {
                    mediator_id: i,
                    size: m.size(),
                    kld: report.mediator_values[i],
                })
                .collect(),
            mediator_kld: Some(report.mediator),
            client_kld: report.client,
            down_bytes: entry.down_bytes,
            up_bytes: entry.up_bytes,
            round_bytes: entry.bytes(),
            cumulative_bytes: entry.cumulative_bytes,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        };
        tracker.push(round_report, &w)?;
        schedules.push(RoundSchedule { round, assignment });
    }

    let final_weights = match tracker.best.take() {
        Some((_, best)) => best,
        None => w,
    };
    Ok(RunOutcome {
        reports: tracker.reports,
        initial_weights: initial,
        initial_accuracy,
        trajectory: tracker.trajectory,
        final_weights,
        ledger,
        plan: Some(plan),
        schedules,
        trained_partition: trained,
    })
}

/// Static schedule restricted to the clients online this round. Member order
/// is kept; mediators with no online member are dropped.
pub(crate) fn restrict(
    full: &MediatorAssignment,
    online: &BTreeMap<ClientId, ClassDistribution>,
) -> MediatorAssignment {
    let mediators = full
        .mediators
        .iter()
        .filter_map(|m| {
            let clients: Vec<ClientId> = m.clients.iter().copied().filter(|k| online.contains_key(k)).collect();
            if clients.is_empty() {
                return None;
            }
            let n = m.combined.num_classes();
            let combined = ClassDistribution::sum(n, clients.iter().map(|k| &online[k]));
            Some(crate::rescheduler::Mediator { clients, combined })
        })
        .collect();
    MediatorAssignment {
        mediators,
        gamma: full.gamma,
    }
}

/// Plain FedAvg: every online client trains from the global weights and the
/// server takes the sample-weighted average `Σ (n_k/n) w_k`.
pub fn run_fedavg_baseline(
    config: &TrainingConfig,
    arch: Architecture,
    partition: &ClientPartition,
    test_set: &LabeledDataset,
) -> Result<RunOutcome> {
    run_fedavg_observed(config, arch, partition, test_set, &mut ())
}

pub fn run_fedavg_observed(
    config: &TrainingConfig,
    arch: Architecture,
    partition: &ClientPartition,
    test_set: &LabeledDataset,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutcome> {
    check_inputs(config, arch, partition, test_set)?;
    if config.mode != Mode::Fedavg {
        return Err(Error::config("mode", "run_fedavg_baseline requires mode = fedavg"));
    }
    let mut ledger = TrafficLedger::new(config.wire_bytes_per_param)?;
    let model_bytes = ledger.model_bytes(arch.num_params());
    let local = config.local_training();
    let initial = ParameterVector::init_uniform(arch, config.seed);
    let initial_accuracy = top1_accuracy(&initial, test_set)?;
    let mut w = initial.clone();
    let mut tracker = Tracker {
        observer,
        reports: Vec::new(),
        trajectory: Vec::new(),
        best: None,
        keep_best: config.stop_at_best_validation,
    };

    for round in 1..=config.rounds {
        let started = Instant::now();
        let online = sample_clients(config.num_clients, config.clients_per_round, config.seed, round);
        let singles: Vec<Vec<ClientId>> = online.iter().map(|&k| vec![k]).collect();
        let finals = map_members(config.parallel_mediators, &singles, |k| {
            client_update(&w, partition.client(k[0]), &local, client_seed(config.seed, round, k[0], 0))
        })?;

        let mut traffic = RoundTraffic::default();
        let deltas = finals
            .iter()
            .map(|f| {
                traffic.send_down(model_bytes);
                traffic.send_up(model_bytes);
                f.delta_from(&w)
            })
            .collect::<Result<Vec<_>>>()?;
        let contributions: Vec<Contribution<'_>> = online
            .iter()
            .zip(&deltas)
            .map(|(&k, d)| Contribution {
                order_key: k,
                num_samples: partition.client(k).len() as u64,
                delta: d,
            })
            .collect();
        w = aggregate(&w, &contributions)?;
        let entry = ledger.record(round, traffic).clone();

        let client_klds: Vec<f64> = online
            .iter()
            .map(|&k| kld_to_uniform(class_histogram(partition.client(k)).counts()))
            .collect();
        let report = RoundReport {
            round,
            accuracy: top1_accuracy(&w, test_set)?,
            train_loss: participants_loss(&w, partition, &online)?,
            mediators: Vec::new(),
            mediator_kld: None,
            client_kld: Summary::of(&client_klds),
            down_bytes: entry.down_bytes,
            up_bytes: entry.up_bytes,
            round_bytes: entry.bytes(),
            cumulative_bytes: entry.cumulative_bytes,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        };
        tracker.push(report, &w)?;
    }

    let final_weights = match tracker.best.take() {
        Some((_, best)) => best,
        None => w,
    };
    Ok(RunOutcome {
        reports: tracker.reports,
        initial_weights: initial,
        initial_accuracy,
        trajectory: tracker.trajectory,
        final_weights,
        ledger,
        plan: None,
        schedules: Vec::new(),
        trained_partition: partition.clone(),
    })
}

/// Dispatch on `config.mode`.
pub fn run(
    config: &TrainingConfig,
    arch: Architecture,
    partition: &ClientPartition,
    test_set: &LabeledDataset,
    observer: &mut dyn RoundObserver,
) -> Result<RunOutcome> {
    match config.mode {
        Mode::Astraea => run_astraea_observed(config, arch, partition, test_set, observer),
        Mode::Fedavg => run_fedavg_observed(config, arch, partition, test_set, observer),
    }
}

/// Closed-form traffic the ledger must reproduce for a round with `mediators`
/// mediators and `c` clients.
pub fn expected_round_bytes(config: &TrainingConfig, num_params: usize, mediators: usize) -> u64 {
    match config.mode {
        Mode::Fedavg => crate::metrics::traffic_fedavg_round(config.clients_per_round, num_params, config.wire_bytes_per_param),
        Mode::Astraea if !config.static_schedule => {
            traffic_astraea_round(config.clients_per_round, config.gamma, num_params, config.wire_bytes_per_param)
        }
        Mode::Astraea => {
            2 * (mediators + config.clients_per_round) as u64 * num_params as u64 * config.wire_bytes_per_param
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropositionResult {
    /// Infinity-norm gap between the FedAvg and centralized weights after each round.
    pub divergences: Vec<f64>,
    pub max_divergence: f64,
}

/// Full-batch FedAvg over `clients` against full-batch gradient descent on
/// `reference`, both from the same `w0`, for `rounds` rounds/steps.
pub fn proposition_check(
    arch: Architecture,
    reference: &LabeledDataset,
    clients: &[LabeledDataset],
    rounds: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<PropositionResult> {
    if clients.is_empty() || clients.iter().any(|c| c.is_empty()) || reference.is_empty() {
        return Err(Error::config("proposition", "needs nonempty reference and client data"));
    }
    let w0 = ParameterVector::init_uniform(arch, seed);
    let mut fed = w0.clone();
    let mut central = w0;
    let full_batch = Batch::from_dataset(reference)?;
    let mut divergences = Vec::with_capacity(rounds);
    for round in 1..=rounds {
        let deltas = clients
            .iter()
            .enumerate()
            .map(|(k, data)| {
                let local = LocalTraining {
                    epochs: 1,
                    batch_size: data.len(),
                    optimizer: OptimizerKind::Sgd,
                    learning_rate,
                };
                client_update(&fed, data, &local, client_seed(seed, round, k, 0))?.delta_from(&fed)
            })
            .collect::<Result<Vec<_>>>()?;
        let contributions: Vec<Contribution<'_>> = clients
            .iter()
            .zip(&deltas)
            .enumerate()
            .map(|(k, (data, delta))| Contribution {
                order_key: k,
                num_samples: data.len() as u64,
                delta,
            })
            .collect();
        fed = aggregate(&fed, &contributions)?;

        let (_, grad) = loss_and_grad(&central, &full_batch)?;
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, learning_rate)?;
        opt.step(&mut central, &grad)?;
        divergences.push(fed.max_abs_diff(&central)?);
    }
    let max_divergence = divergences.iter().copied().fold(0.0, f64::max);
    Ok(PropositionResult {
        divergences,
        max_divergence,
    })
}

/// Every client holds an identical copy of `data`.
pub fn proposition_check_identical(
    arch: Architecture,
    data: &LabeledDataset,
    num_clients: usize,
    rounds: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<PropositionResult> {
    let clients = vec![data.clone(); num_clients];
    proposition_check(arch, data, &clients, rounds, learning_rate, seed)
}
