use astraea_core::dataset::{
    class_histogram, english_letter_frequencies, make_synthetic, partition_clients, resample_to_frequency,
    PartitionProfile,
};
use astraea_core::engine::{self, client_update, LocalTraining, Mode, TrainingConfig};
use astraea_core::metrics::confusion;
use astraea_core::model::{top1_accuracy, Architecture, OptimizerKind, ParameterVector};

/// Largest remainder by hand: floors first, then the biggest fractional
/// parts (lowest index on ties) get one more unit each.
fn largest_remainder(freq: &[f64], total: u64) -> Vec<u64> {
    let sum: f64 = freq.iter().sum();
    let exact: Vec<f64> = freq.iter().map(|f| f / sum * total as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|e| e.floor() as u64).collect();
    let left = total - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..freq.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(left as usize) {
        out[i] += 1;
    }
    out
}

#[test]
fn letter_resampling_matches_largest_remainder() {
    let freq = english_letter_frequencies();
    let source = make_synthetic(26, &[1300; 26], 2, 1.0, 3).unwrap();
    let data = resample_to_frequency(&source, &freq, 10_000, 3).unwrap();
    let hist = class_histogram(&data);
    assert_eq!(hist.counts(), largest_remainder(&freq, 10_000).as_slice());
    let max_class = (0..26).max_by_key(|&i| hist.counts()[i]).unwrap();
    assert_eq!(max_class, 4, "'e' should be the most common letter");
}

#[test]
fn well_separated_blobs_are_learned() {
    let data = make_synthetic(2, &[200, 200], 3, 10.0, 5).unwrap();
    let arch = Architecture::Softmax { features: 3, classes: 2 };
    let w = ParameterVector::init_uniform(arch, 5);
    let local = LocalTraining {
        epochs: 5,
        batch_size: 16,
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.1,
    };
    let trained = client_update(&w, &data, &local, 1).unwrap();
    assert!(top1_accuracy(&trained, &data).unwrap() >= 0.95);
}

#[test]
fn imbalanced_training_hurts_minority_recall() {
    let data = make_synthetic(3, &[420, 420, 40], 4, 1.5, 8).unwrap();
    let (pool, test) = data.split_balanced(20, 8).unwrap();
    let partition = partition_clients(&pool, 10, &PartitionProfile::default(), 8).unwrap();
    let cfg = TrainingConfig {
        num_clients: 10,
        clients_per_round: 5,
        rounds: 30,
        learning_rate: 0.05,
        mode: Mode::Fedavg,
        ..TrainingConfig::default()
    };
    let arch = Architecture::Softmax { features: 4, classes: 3 };
    let out = engine::run(&cfg, arch, &partition, &test, &mut ()).unwrap();
    let m = confusion(&out.final_weights, &test).unwrap();
    let recall = m.recall();
    let minority = recall[2].unwrap();
    assert!(minority < recall[0].unwrap() && minority < recall[1].unwrap(), "{recall:?}");
    // Most minority mistakes land in majority columns.
    let off_diagonal = m.get(2, 0) + m.get(2, 1);
    assert!(off_diagonal > 0);
}
