//! Prune-and-retrain cycle mechanics and synthetic data sanity.

use optg_core::baselines::{cycle_experiment, magnitude_saliency, one_shot_prune, CycleConfig};
use optg_core::data::{blobs_with_means, synthetic_blobs};
use optg_core::nn::{LayerSpec, Network};
use optg_core::trainer::{fine_tune, FineTuneConfig, SparseModel};

fn blob_net(dim: usize, classes: usize) -> Network {
    Network::new(
        vec![dim],
        vec![
            LayerSpec::Linear {
                in_features: dim,
                out_features: 16,
            },
            LayerSpec::Relu,
            LayerSpec::Linear {
                in_features: 16,
                out_features: classes,
            },
        ],
    )
    .unwrap()
}

#[test]
fn linear_probe_separates_distant_blobs() {
    // Two classes 10 apart in 2-D: a linear model reaches > 99% on train.
    let train = blobs_with_means(&[vec![-5.0, 0.0], vec![5.0, 0.0]], 200, 7).unwrap();
    let net = Network::new(
        vec![2],
        vec![LayerSpec::Linear {
            in_features: 2,
            out_features: 2,
        }],
    )
    .unwrap();
    let mut model = SparseModel::init(net, 1, &[]);
    let cfg = FineTuneConfig {
        epochs: 15,
        batch_size: 32,
        lr0: 0.5,
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 3,
        shuffle_offset: 0,
    };
    let records = fine_tune(&mut model, &cfg, &train, Some(&train)).unwrap();
    let acc = records.last().unwrap().eval_accuracy.unwrap();
    assert!(acc > 0.99, "linear probe accuracy {acc}");
}

#[test]
fn indivisible_epochs_rejected() {
    let net = blob_net(4, 3);
    let train = synthetic_blobs(1, 30, 3, 4, 8.0).unwrap();
    let cfg = CycleConfig {
        cycles: 3,
        total_epochs: 10,
        target: 0.5,
        batch_size: 8,
        lr0: 0.1,
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 2,
    };
    assert!(matches!(
        cycle_experiment(&net, &cfg, &train, &train),
        Err(optg_core::Error::Config(_))
    ));
}

#[test]
fn single_cycle_equals_oneshot_prune_then_finetune() {
    let net = blob_net(6, 3);
    let train = synthetic_blobs(5, 96, 3, 6, 7.0).unwrap();
    let test = synthetic_blobs(6, 48, 3, 6, 7.0).unwrap();
    let seed = 11;
    let cfg = CycleConfig {
        cycles: 1,
        total_epochs: 6,
        target: 0.6,
        batch_size: 16,
        lr0: 0.2,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed,
    };
    let outcome = cycle_experiment(&net, &cfg, &train, &test).unwrap();

    // Manual one-shot magnitude prune + fine-tune with the same seed.
    let mut model = SparseModel::init(net.clone(), seed, &[]);
    let scores = magnitude_saliency(&model);
    one_shot_prune(&mut model, &scores, 0.6).unwrap();
    let ft = FineTuneConfig {
        epochs: 6,
        batch_size: 16,
        lr0: 0.2,
        momentum: 0.9,
        weight_decay: 1e-4,
        seed,
        shuffle_offset: 0,
    };
    let records = fine_tune(&mut model, &ft, &train, Some(&test)).unwrap();
    assert_eq!(outcome.records, records);
    assert_eq!(
        outcome.final_accuracy,
        records.last().unwrap().eval_accuracy.unwrap()
    );
    assert_eq!(outcome.cycle_sparsity, vec![0.6]);
}

#[test]
fn dense_target_single_cycle_is_dense_training() {
    let net = blob_net(4, 2);
    let train = synthetic_blobs(9, 64, 2, 4, 8.0).unwrap();
    let cfg = CycleConfig {
        cycles: 1,
        total_epochs: 4,
        target: 0.0,
        batch_size: 16,
        lr0: 0.2,
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 13,
    };
    let outcome = cycle_experiment(&net, &cfg, &train, &train).unwrap();
    let mut dense = SparseModel::init(net.clone(), 13, &[]);
    let ft = FineTuneConfig {
        epochs: 4,
        batch_size: 16,
        lr0: 0.2,
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 13,
        shuffle_offset: 0,
    };
    let records = fine_tune(&mut dense, &ft, &train, Some(&train)).unwrap();
    assert_eq!(outcome.records, records);
    assert!(outcome.cycle_sparsity.iter().all(|&p| p == 0.0));
}

#[test]
fn cycles_ramp_sparsity_monotonically_without_revival() {
    let net = blob_net(5, 3);
    let train = synthetic_blobs(3, 60, 3, 5, 7.0).unwrap();
    let cfg = CycleConfig {
        cycles: 4,
        total_epochs: 8,
        target: 0.8,
        batch_size: 12,
        lr0: 0.2,
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 23,
    };
    let outcome = cycle_experiment(&net, &cfg, &train, &train).unwrap();
    assert_eq!(outcome.cycle_sparsity, vec![0.2, 0.4, 0.6000000000000001, 0.8]);
    // Sparsity of the records is nondecreasing across the run.
    let mut prev = 0.0;
    for r in &outcome.records {
        assert!(r.sparsity >= prev - 1e-12);
        prev = r.sparsity;
    }
    assert!((prev - 0.8).abs() < 0.01);
}
