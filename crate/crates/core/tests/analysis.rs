mod common;

use fatigue_core::analysis::{coverage_mask, partial_dependence, qualitative_trends, spearman};
use fatigue_core::dataset::{FeatureRange, ScalerParams};
use fatigue_core::model::{Model, Provenance};
use fatigue_core::network::{Activation, Layer, Network, NetworkConfig};
use fatigue_core::Error;
use ndarray::array;
use proptest::prelude::*;

fn scaler() -> ScalerParams {
    ScalerParams {
        binder: FeatureRange { min: 4.0, max: 6.7 },
        voids: FeatureRange { min: 1.2, max: 12.8 },
        strain: FeatureRange { min: 115.0, max: 1000.0 },
    }
}

/// `N = w · scaled input + b` with a single linear layer.
fn linear_model(w: [f64; 3], b: f64, inputs: Vec<[f64; 3]>) -> Model {
    let net = Network::from_layers(vec![Layer {
        weights: array![[w[0], w[1], w[2]]],
        biases: array![b],
        activation: Activation::Linear,
    }])
    .unwrap();
    let cfg = NetworkConfig { n_hidden_layers: 1, neurons_per_hidden: 1, ..NetworkConfig::default() };
    Model::new(cfg, net, scaler(), inputs, Provenance::default())
}

fn inputs(n: usize) -> Vec<[f64; 3]> {
    common::synthetic(n, 31).iter().map(|s| s.features()).collect()
}

#[test]
fn surface_is_fifty_by_fifty_over_the_data_ranges() {
    let m = linear_model([1e4, 0.0, 0.0], 0.0, inputs(40));
    let s = partial_dependence(&m, 200.0, 50, 0.1).unwrap();
    assert_eq!(s.predictions.len(), 50);
    assert!(s.predictions.iter().all(|r| r.len() == 50));
    assert_eq!((s.binder_axis[0], s.binder_axis[49]), (4.0, 6.7));
    assert_eq!((s.voids_axis[0], s.voids_axis[49]), (1.2, 12.8));
}

#[test]
fn surface_cells_equal_direct_predictions() {
    let m = linear_model([3e3, -2e3, -1e3], 5e3, inputs(30));
    let s = partial_dependence(&m, 400.0, 7, 0.2).unwrap();
    for (i, &b) in s.binder_axis.iter().enumerate() {
        for (j, &v) in s.voids_axis.iter().enumerate() {
            assert_eq!(s.predictions[i][j], m.predict_one([b, v, 400.0]).unwrap().cycles);
        }
    }
}

#[test]
fn degenerate_and_zero_models() {
    let m = linear_model([0.0; 3], 0.0, inputs(10));
    let s = partial_dependence(&m, 400.0, 1, 0.1).unwrap();
    assert_eq!((s.binder_axis.clone(), s.voids_axis.clone()), (vec![4.0], vec![1.2]));
    let s = partial_dependence(&m, 400.0, 10, 0.1).unwrap();
    assert!(s.predictions.iter().flatten().all(|&p| p == 0.0));
    assert!(matches!(
        partial_dependence(&m, 1500.0, 10, 0.1),
        Err(Error::StrainExtrapolation { .. })
    ));
}

#[test]
fn monotone_and_constant_trends() {
    let m = linear_model([1e4, 0.0, 0.0], 1e3, inputs(60));
    let s = partial_dependence(&m, 400.0, 20, 0.15).unwrap();
    let t = qualitative_trends(&s).unwrap();
    assert_eq!(t.binder_spearman, 1.0);
    assert!(t.argmax.binder > t.argmin.binder);

    let flat = linear_model([0.0; 3], 7.0, inputs(60));
    let t = qualitative_trends(&partial_dependence(&flat, 400.0, 20, 0.15).unwrap()).unwrap();
    assert_eq!((t.binder_spearman, t.voids_spearman), (0.0, 0.0));

    let lonely = linear_model([1.0; 3], 0.0, vec![[5.0, 6.0, 400.0]]);
    assert!(matches!(
        qualitative_trends(&partial_dependence(&lonely, 400.0, 3, 0.01).unwrap()),
        Err(Error::TrendUndefined(_))
    ));
}

proptest! {
    #[test]
    fn coverage_grows_with_radius(
        points in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..20),
        r1 in 0.001f64..1.0,
        extra in 0.0f64..1.0,
        n in 1usize..15,
    ) {
        let axis: Vec<f64> = (0..n).map(|i| if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 }).collect();
        let small = coverage_mask(&axis, &axis, &points, r1).unwrap();
        let large = coverage_mask(&axis, &axis, &points, r1 + extra).unwrap();
        for (a, b) in small.iter().flatten().zip(large.iter().flatten()) {
            prop_assert!(!a || *b);
        }
        let all = coverage_mask(&axis, &axis, &points, 2f64.sqrt()).unwrap();
        prop_assert!(all.iter().flatten().all(|&c| c == !points.is_empty()));
    }

    #[test]
    fn spearman_is_bounded_and_symmetric(
        xs in prop::collection::vec(-10.0f64..10.0, 2..30),
        seed in any::<u64>(),
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| (x * 7.0 + (seed % 13) as f64 * i as f64).sin()).collect();
        let r = spearman(&xs, &ys);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!((r - spearman(&ys, &xs)).abs() < 1e-12);
        let inc: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let distinct = xs.iter().enumerate().all(|(i, a)| xs[i + 1..].iter().all(|b| a != b));
        if distinct {
            prop_assert!((spearman(&xs, &inc) - 1.0).abs() < 1e-12);
        }
    }
}
