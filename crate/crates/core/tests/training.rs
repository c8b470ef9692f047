use rand::Rng;
use rand_distr::StandardNormal;
use streamaad_core::data::{Direction, Scenario, TrialMeta};
use streamaad_core::model::{Model, ModelConfig, ModelKind, WindowSequence};
use streamaad_core::rng::rng_from;
use streamaad_core::training::{
    average, ensemble_across_epochs, ensemble_across_runs, epoch_order, predict_windows, train,
    TrainConfig, WindowProbs,
};
use streamaad_core::{Precision, Tensor};

const CFG: ModelConfig = ModelConfig {
    channels: 4,
    hidden: 8,
    kernel: 3,
};

/// Two Gaussian classes with means +1 and -1.
fn toy_sequences<F: streamaad_core::Real>(n: usize, seed: u64) -> Vec<WindowSequence<F>> {
    let mut rng = rng_from(seed);
    let (len, stride, t) = (16, 8, 3);
    let span = (t - 1) * stride + len;
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 {
                Direction::Left
            } else {
                Direction::Right
            };
            let mu = if label == Direction::Left { 1.0 } else { -1.0 };
            let data = (0..span * CFG.channels)
                .map(|_| F::from_f64_lossy(mu + rng.sample::<f64, _>(StandardNormal)))
                .collect();
            let meta = TrialMeta {
                subject: 1,
                scenario: Scenario::AudioOnly,
                trial: i as u32 + 1,
                label,
            };
            WindowSequence::new(
                Tensor::new([span, CFG.channels], data).unwrap(),
                len,
                stride,
                meta,
                0,
            )
            .unwrap()
        })
        .collect()
}

fn toy_config(kind: ModelKind, epochs: usize, precision: Precision) -> TrainConfig {
    TrainConfig {
        epochs,
        seed: 11,
        model: kind,
        model_config: CFG,
        precision,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_problem_is_learned() {
    let data = toy_sequences::<f32>(160, 1);
    let val = toy_sequences::<f32>(40, 2);
    for kind in [ModelKind::StreamAad, ModelKind::Cnn] {
        let out = train(&data, &val, &toy_config(kind, 50, Precision::F32), |_| {}).unwrap();
        let best = out
            .history
            .iter()
            .map(|r| r.train_accuracy)
            .fold(0.0, f64::max);
        assert!(best >= 0.99, "{kind:?}: best train accuracy {best}");
        assert!(out.history.last().unwrap().val_accuracy.unwrap() >= 0.95);
    }
}

#[test]
fn same_seed_same_history() {
    let data = toy_sequences::<f32>(24, 3);
    let val = toy_sequences::<f32>(8, 4);
    let cfg = toy_config(ModelKind::StreamAad, 4, Precision::F32);
    let a = train(&data, &val, &cfg, |_| {}).unwrap();
    let b = train(&data, &val, &cfg, |_| {}).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.model, b.model);
    let c = train(&data, &val, &TrainConfig { seed: 12, ..cfg }, |_| {}).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn checkpoint_retention() {
    let data = toy_sequences::<f64>(8, 5);
    for epochs in [1, 3, 10, 13] {
        let mut seen = Vec::new();
        let out = train(
            &data,
            &[],
            &toy_config(ModelKind::Cnn, epochs, Precision::F64),
            |r| seen.push(r.epoch),
        )
        .unwrap();
        assert_eq!(out.checkpoints.len(), epochs.min(10));
        assert_eq!(out.checkpoints.last().unwrap().epoch, epochs);
        assert_eq!(out.checkpoints.last().unwrap().model, out.model);
        assert_eq!(seen, (1..=epochs).collect::<Vec<_>>());
        assert!(out.history.iter().all(|r| r.val_loss.is_none()));
    }
}

#[test]
fn invalid_runs_rejected() {
    let data = toy_sequences::<f32>(4, 6);
    let cfg = toy_config(ModelKind::Cnn, 1, Precision::F32);
    assert!(train::<f32>(&[], &[], &cfg, |_| {}).is_err());
    assert!(train(
        &data,
        &[],
        &TrainConfig {
            batch_size: 0,
            ..cfg
        },
        |_| {}
    )
    .is_err());
    assert!(train(
        &data,
        &[],
        &TrainConfig {
            precision: Precision::F64,
            ..cfg
        },
        |_| {}
    )
    .is_err());
    let wide = TrainConfig {
        model_config: ModelConfig { channels: 5, ..CFG },
        ..cfg
    };
    assert!(train(&data, &[], &wide, |_| {}).is_err());
}

#[test]
fn shuffle_is_a_permutation_fixed_by_seed_and_epoch() {
    let a = epoch_order(3, 1, 50);
    let mut sorted = a.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..50).collect::<Vec<_>>());
    assert_eq!(a, epoch_order(3, 1, 50));
    assert_ne!(a, epoch_order(3, 2, 50));
    assert_ne!(a, epoch_order(4, 1, 50));
}

fn probs(keys_from: &WindowProbs<f64>, rows: &[[f64; 2]]) -> WindowProbs<f64> {
    WindowProbs {
        keys: keys_from.keys[..rows.len()].to_vec(),
        probs: Tensor::new([rows.len(), 2], rows.iter().flatten().copied().collect()).unwrap(),
    }
}

#[test]
fn ensemble_arithmetic() {
    let data = toy_sequences::<f64>(2, 7);
    let model = Model::<f64>::init(ModelKind::StreamAad, CFG, 1);
    let single = predict_windows(&model, &data).unwrap();
    assert_eq!(single.len(), 6);

    let same = ensemble_across_epochs(&[&model, &model, &model], &data).unwrap();
    assert!(same.probs.max_abs_diff(&single.probs) < 1e-15);

    let a = probs(&single, &[[0.9, 0.1]]);
    let b = probs(&single, &[[0.7, 0.3]]);
    let m = average(&[a.clone(), b.clone()]).unwrap();
    assert!((m.probs.data()[0] - 0.8).abs() < 1e-15);
    assert!((m.probs.data()[1] - 0.2).abs() < 1e-15);

    let other = Model::<f64>::init(ModelKind::StreamAad, CFG, 2);
    let ens = ensemble_across_epochs(&[&model, &other], &data).unwrap();
    for row in ens.probs.data().chunks(2) {
        assert!((row[0] + row[1] - 1.0).abs() < 1e-12);
    }
    assert!(ensemble_across_epochs::<f64>(&[], &data).is_err());
}

#[test]
fn run_ensemble_is_order_invariant_and_checks_windows() {
    let data = toy_sequences::<f64>(3, 8);
    let runs: Vec<_> = (0..4)
        .map(|s| predict_windows(&Model::<f64>::init(ModelKind::Cnn, CFG, s), &data).unwrap())
        .collect();
    let fwd = ensemble_across_runs(&runs).unwrap();
    let rev: Vec<_> = runs.iter().rev().cloned().collect();
    assert!(
        ensemble_across_runs(&rev)
            .unwrap()
            .probs
            .max_abs_diff(&fwd.probs)
            < 1e-15
    );
    assert_eq!(ensemble_across_runs(&runs[..1]).unwrap(), runs[0]);

    let shifted = predict_windows(&Model::<f64>::init(ModelKind::Cnn, CFG, 0), &data[1..]).unwrap();
    let err = ensemble_across_runs(&[runs[0].clone(), shifted]).unwrap_err();
    assert!(matches!(err, streamaad_core::Error::Consistency(_)));
}
