mod common;

use fatigue_core::dataset;
use fatigue_core::network::{Network, NetworkConfig};
use fatigue_core::training::{
    train, write_history_csv, Algorithm, CheckpointMetric, LossKind, OptimizerConfig, Split,
    TrainConfig,
};
use fatigue_core::Error;
use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit_data(n: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, 3), |_| rng.random_range(0.0..1.0));
    let y = Array1::from_shape_fn(n, |_| rng.random_range(1.0..2.0));
    (x, y)
}

fn scaled(samples: &[dataset::Sample]) -> (Array2<f64>, Array1<f64>) {
    let params = dataset::fit_scaler(samples).unwrap();
    (dataset::transform(samples, &params), dataset::targets(samples))
}

#[test]
fn selected_architecture_memorizes_twenty_points() {
    let (x, y) = unit_data(20, 0);
    let net = Network::init(&NetworkConfig { seed: 0, ..NetworkConfig::default() }).unwrap();
    let cfg = TrainConfig {
        loss: LossKind::Mse,
        epochs: 5000,
        checkpoint: CheckpointMetric::TrainingLoss,
        seed: 0,
        ..TrainConfig::default()
    };
    let out = train(net, Split::new(x.view(), y.view()), Split::new(x.view(), y.view()), &cfg).unwrap();
    assert!(out.converged);
    let best = out.history.train_loss[out.history.best_epoch - 1];
    assert!(
        best <= 1e-3 * out.history.initial_train_loss,
        "best {best} vs initial {}",
        out.history.initial_train_loss
    );
}

#[test]
fn huge_learning_rate_is_flagged_not_fatal() {
    let samples = common::synthetic(120, 3);
    let (x, y) = scaled(&samples);
    for loss in [LossKind::Mse, LossKind::Msle] {
        let cfg = TrainConfig {
            loss,
            epochs: 300,
            optimizer: OptimizerConfig::new(Algorithm::RmsProp).with_learning_rate(1e3),
            ..TrainConfig::default()
        };
        let net = Network::init(&NetworkConfig { seed: 1, ..NetworkConfig::default() }).unwrap();
        let out = train(
            net,
            Split::new(x.slice(ndarray::s![..90, ..]), y.slice(ndarray::s![..90])),
            Split::new(x.slice(ndarray::s![90.., ..]), y.slice(ndarray::s![90..])),
            &cfg,
        )
        .unwrap();
        assert!(!out.converged, "{loss}");
        assert!(out.failure.is_some());
        assert!(out.history.epochs() < 300);
    }
}

#[test]
fn overflowing_network_is_flagged() {
    let (x, y) = unit_data(8, 1);
    let mut net = Network::init(&NetworkConfig {
        n_hidden_layers: 2,
        neurons_per_hidden: 4,
        ..NetworkConfig::default()
    })
    .unwrap();
    for l in net.layers_mut() {
        l.weights.fill(1e200);
    }
    assert!(matches!(net.forward_batch(x.view()), Err(Error::ForwardOverflow)));
    let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let out = train(net, Split::new(x.view(), y.view()), Split::new(x.view(), y.view()), &cfg).unwrap();
    assert!(!out.converged);
}

#[test]
fn identical_runs_are_bit_identical() {
    let samples = common::synthetic(60, 4);
    let (x, y) = scaled(&samples);
    let run = || {
        let net = Network::init(&NetworkConfig {
            neurons_per_hidden: 16,
            seed: 9,
            ..NetworkConfig::default()
        })
        .unwrap();
        let cfg = TrainConfig { epochs: 40, batch_size: 7, seed: 5, ..TrainConfig::default() };
        train(
            net,
            Split::new(x.slice(ndarray::s![..45, ..]), y.slice(ndarray::s![..45])),
            Split::new(x.slice(ndarray::s![45.., ..]), y.slice(ndarray::s![45..])),
            &cfg,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.network, b.network);
    assert_eq!(a.history.train_loss, b.history.train_loss);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    write_history_csv(&mut ca, &a.history).unwrap();
    write_history_csv(&mut cb, &b.history).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn checkpoint_is_no_worse_than_any_epoch() {
    let samples = common::synthetic(50, 6);
    let (x, y) = scaled(&samples);
    for metric in [CheckpointMetric::ValidationLoss, CheckpointMetric::TrainingLoss] {
        let net = Network::init(&NetworkConfig { neurons_per_hidden: 8, ..NetworkConfig::default() }).unwrap();
        let cfg = TrainConfig { epochs: 60, checkpoint: metric, ..TrainConfig::default() };
        let out = train(
            net,
            Split::new(x.slice(ndarray::s![..40, ..]), y.slice(ndarray::s![..40])),
            Split::new(x.slice(ndarray::s![40.., ..]), y.slice(ndarray::s![40..])),
            &cfg,
        )
        .unwrap();
        let h = &out.history;
        let series = match metric {
            CheckpointMetric::ValidationLoss => &h.val_loss,
            CheckpointMetric::TrainingLoss => &h.train_loss,
        };
        let best = series[h.best_epoch - 1];
        assert!(series.iter().all(|&v| best <= v));
        let pred = out.network.forward_batch(x.slice(ndarray::s![40.., ..])).unwrap();
        if metric == CheckpointMetric::ValidationLoss {
            let recomputed = fatigue_core::training::compute_loss(
                LossKind::Msle,
                &y.as_slice().unwrap()[40..],
                pred.as_slice().unwrap(),
            )
            .unwrap();
            assert_eq!(recomputed, best);
        }
    }
}

#[test]
fn one_epoch_run() {
    let (x, y) = unit_data(10, 2);
    let net = Network::init(&NetworkConfig { neurons_per_hidden: 4, ..NetworkConfig::default() }).unwrap();
    let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let out = train(net, Split::new(x.view(), y.view()), Split::new(x.view(), y.view()), &cfg).unwrap();
    assert_eq!(out.history.epochs(), 1);
    assert_eq!(out.history.best_epoch, 1);
}
