use astraea_core::dataset::{make_synthetic, partition_clients, ClassDistribution, LabeledDataset, PartitionProfile};
use astraea_core::engine::{
    self, aggregate, client_seed, client_update, expected_round_bytes, mediator_update, Contribution,
    LocalTraining, Mode, TrainingConfig,
};
use astraea_core::model::{top1_accuracy, Architecture, OptimizerKind, ParameterVector};
use astraea_core::rescheduler::reschedule;
use proptest::prelude::*;
use std::collections::BTreeMap;

fn sgd(batch_size: usize, lr: f64) -> LocalTraining {
    LocalTraining {
        epochs: 1,
        batch_size,
        optimizer: OptimizerKind::Sgd,
        learning_rate: lr,
    }
}

/// Mean cross-entropy gradient of softmax regression, written out directly:
/// `dW[c][j] = mean (p_c - 1{y=c}) x_j`, `db[c] = mean (p_c - 1{y=c})`.
fn softmax_gradient(w: &[f64], data: &LabeledDataset, features: usize, classes: usize) -> Vec<f64> {
    let mut g = vec![0.0; w.len()];
    let n = data.len() as f64;
    for s in data.samples() {
        let logits: Vec<f64> = (0..classes)
            .map(|c| w[classes * features + c] + (0..features).map(|j| w[c * features + j] * s.features[j]).sum::<f64>())
            .collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for c in 0..classes {
            let err = (logits[c] - m).exp() / z - if c == s.label { 1.0 } else { 0.0 };
            for j in 0..features {
                g[c * features + j] += err * s.features[j] / n;
            }
            g[classes * features + c] += err / n;
        }
    }
    g
}

#[test]
fn full_batch_client_update_is_one_gradient_step() {
    let data = make_synthetic(3, &[7, 5, 4], 4, 2.0, 1).unwrap();
    let arch = Architecture::Softmax { features: 4, classes: 3 };
    let w = ParameterVector::init_uniform(arch, 5);
    let lr = 0.3;
    let out = client_update(&w, &data, &sgd(data.len(), lr), 9).unwrap();
    let g = softmax_gradient(w.values(), &data, 4, 3);
    for ((o, w0), gi) in out.values().iter().zip(w.values()).zip(&g) {
        assert!((o - (w0 - lr * gi)).abs() < 1e-12);
    }
}

#[test]
fn mediator_unrolls_into_sequential_client_updates() {
    let d1 = make_synthetic(2, &[6, 2], 3, 1.5, 2).unwrap();
    let d2 = make_synthetic(2, &[1, 8], 3, 1.5, 3).unwrap();
    let arch = Architecture::Mlp { features: 3, hidden: 4, classes: 2 };
    let w = ParameterVector::init_uniform(arch, 1);
    let local = LocalTraining {
        epochs: 2,
        batch_size: 3,
        optimizer: OptimizerKind::Adam,
        learning_rate: 0.01,
    };
    let (seed, round) = (77, 4);
    let out = mediator_update(&[(3, &d1), (8, &d2)], &w, 2, &local, seed, round, 100).unwrap();

    let mut expect = w.clone();
    for pass in 0..2 {
        expect = client_update(&expect, &d1, &local, client_seed(seed, round, 3, pass)).unwrap();
        expect = client_update(&expect, &d2, &local, client_seed(seed, round, 8, pass)).unwrap();
    }
    assert_eq!(out.final_weights, expect);
    let delta: Vec<f64> = expect.values().iter().zip(w.values()).map(|(a, b)| a - b).collect();
    assert_eq!(out.delta.values(), delta.as_slice());
    // One server exchange plus one receive and one send per member, whatever E_m is.
    assert_eq!(out.traffic.down_bytes, 300);
    assert_eq!(out.traffic.up_bytes, 300);
}

#[test]
fn single_member_mediator_reports_client_delta() {
    let d = make_synthetic(3, &[4, 4, 4], 2, 2.0, 4).unwrap();
    let arch = Architecture::Softmax { features: 2, classes: 3 };
    let w = ParameterVector::init_uniform(arch, 2);
    let local = sgd(5, 0.1);
    let out = mediator_update(&[(0, &d)], &w, 1, &local, 1, 1, 8).unwrap();
    let direct = client_update(&w, &d, &local, client_seed(1, 1, 0, 0)).unwrap();
    assert_eq!(out.delta, direct.delta_from(&w).unwrap());
}

#[test]
fn aggregate_weights_by_sample_count() {
    let arch = Architecture::Softmax { features: 1, classes: 2 };
    let base = ParameterVector::from_values(arch, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let d1 = ParameterVector::from_values(arch, vec![4.0, 0.0, -4.0, 8.0]).unwrap();
    let d2 = ParameterVector::from_values(arch, vec![0.0, 8.0, 4.0, -8.0]).unwrap();
    let out = aggregate(
        &base,
        &[
            Contribution { order_key: 0, num_samples: 30, delta: &d1 },
            Contribution { order_key: 1, num_samples: 10, delta: &d2 },
        ],
    )
    .unwrap();
    assert_eq!(out.values(), &[4.0, 4.0, 1.0, 8.0]);
}

#[test]
fn aggregate_rejects_zero_samples() {
    let arch = Architecture::Softmax { features: 1, classes: 2 };
    let base = ParameterVector::zeros(arch);
    assert!(aggregate(&base, &[]).is_err());
}

proptest! {
    #[test]
    fn aggregate_ignores_contribution_order(
        raw in prop::collection::vec((1u64..50, prop::collection::vec(-1.0f64..1.0, 4)), 1..6),
        rotate in 0usize..6,
    ) {
        let arch = Architecture::Softmax { features: 1, classes: 2 };
        let base = ParameterVector::from_values(arch, vec![0.1, -0.2, 0.3, 0.0]).unwrap();
        let deltas: Vec<ParameterVector> = raw.iter().map(|(_, v)| ParameterVector::from_values(arch, v.clone()).unwrap()).collect();
        let mut contributions: Vec<Contribution<'_>> = raw
            .iter()
            .zip(&deltas)
            .enumerate()
            .map(|(k, ((n, _), d))| Contribution { order_key: k, num_samples: *n, delta: d })
            .collect();
        let a = aggregate(&base, &contributions).unwrap();
        let len = contributions.len();
        contributions.rotate_left(rotate % len);
        contributions.reverse();
        let b = aggregate(&base, &contributions).unwrap();
        prop_assert_eq!(a.values(), b.values());
    }
}

fn small_setup() -> (engine::TrainingConfig, Architecture, astraea_core::dataset::ClientPartition, LabeledDataset) {
    let data = make_synthetic(4, &[50, 40, 20, 10], 3, 2.0, 12).unwrap();
    let (pool, test) = data.split_balanced(5, 12).unwrap();
    let partition = partition_clients(&pool, 12, &PartitionProfile::default(), 12).unwrap();
    let cfg = TrainingConfig {
        num_clients: 12,
        clients_per_round: 7,
        gamma: 3,
        batch_size: 4,
        rounds: 3,
        seed: 12,
        ..TrainingConfig::default()
    };
    (cfg, Architecture::Softmax { features: 3, classes: 4 }, partition, test)
}

#[test]
fn zero_learning_rate_keeps_initial_weights() {
    let (cfg, arch, partition, test) = small_setup();
    for mode in [Mode::Astraea, Mode::Fedavg] {
        let cfg = TrainingConfig { rounds: 1, learning_rate: 0.0, mode, ..cfg.clone() };
        let out = engine::run(&cfg, arch, &partition, &test, &mut ()).unwrap();
        assert_eq!(out.final_weights, out.initial_weights);
        assert_eq!(out.reports[0].accuracy, out.initial_accuracy);
        assert_eq!(out.initial_accuracy, top1_accuracy(&out.initial_weights, &test).unwrap());
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let (cfg, arch, partition, test) = small_setup();
    let bad = [
        TrainingConfig { gamma: 0, ..cfg.clone() },
        TrainingConfig { clients_per_round: 13, ..cfg.clone() },
        TrainingConfig { rounds: 0, ..cfg.clone() },
        TrainingConfig { alpha: 1.5, ..cfg.clone() },
        TrainingConfig { batch_size: 0, ..cfg.clone() },
    ];
    for c in bad {
        assert!(engine::run(&c, arch, &partition, &test, &mut ()).is_err(), "{c:?}");
    }
}

#[test]
fn static_schedule_traffic_uses_actual_mediator_count() {
    let (cfg, arch, partition, test) = small_setup();
    let cfg = TrainingConfig { static_schedule: true, ..cfg };
    let out = engine::run(&cfg, arch, &partition, &test, &mut ()).unwrap();
    for (s, r) in out.schedules.iter().zip(&out.reports) {
        let m = s.assignment.mediators.len();
        assert_eq!(r.round_bytes, expected_round_bytes(&cfg, arch.num_params(), m));
        assert_eq!(s.assignment.num_clients(), cfg.clients_per_round);
    }
}

#[test]
fn dynamic_schedule_groups_only_online_clients() {
    let (cfg, arch, partition, test) = small_setup();
    let out = engine::run(&cfg, arch, &partition, &test, &mut ()).unwrap();
    for s in &out.schedules {
        let online = engine::sample_clients(cfg.num_clients, cfg.clients_per_round, cfg.seed, s.round);
        let mut ids: Vec<usize> = s.assignment.client_ids().collect();
        ids.sort_unstable();
        assert_eq!(ids, online);
        let dists: BTreeMap<usize, ClassDistribution> = online
            .iter()
            .map(|&k| (k, out.trained_partition.histograms()[k].clone()))
            .collect();
        assert_eq!(s.assignment, reschedule(&dists, cfg.gamma).unwrap());
    }
}

#[test]
fn setup_round_records_histogram_declarations() {
    let (cfg, arch, partition, test) = small_setup();
    let out = engine::run(&cfg, arch, &partition, &test, &mut ()).unwrap();
    let setup = out.ledger.entry_for_round(0).unwrap();
    assert_eq!(setup.up_bytes, 12 * 4 * engine::DECLARATION_BYTES_PER_CLASS);
    assert_eq!(setup.down_bytes, 0);
    let fedavg = engine::run(&TrainingConfig { mode: Mode::Fedavg, ..cfg }, arch, &partition, &test, &mut ()).unwrap();
    assert!(fedavg.ledger.entry_for_round(0).is_none());
}
