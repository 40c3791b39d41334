use nn_sensitivity::data::{generate_synthetic, split, SplitFractions};
use nn_sensitivity::engine::forward;
use nn_sensitivity::models::{build_mlp, read_bundle, write_bundle, Activation, ModelBundle, ModelSpec, TrainedModel};
use nn_sensitivity::training::{train, TrainConfig};
use nn_sensitivity::{Network, NetworkF32};

fn fitted(seed: u64) -> (ModelSpec, Network, nn_sensitivity::data::Dataset, f64) {
    let data = split(&generate_synthetic(600, 0.1, 4), SplitFractions::train_test(0.8), 0).unwrap();
    let spec = ModelSpec::mlp(&[5, 16, 1], &[Activation::Tanh, Activation::Linear], seed);
    let config = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 60,
        batch_size: 32,
        seed,
        ..TrainConfig::default()
    };
    let net: Network = build_mlp(&spec).unwrap();
    let (net, report) = train(&net, &data, &config).unwrap();
    (spec, net, data, report.test_metric.unwrap())
}

#[test]
fn training_reduces_error_and_is_deterministic() {
    let (_, a, data, mse) = fitted(7);
    let (_, b, _, _) = fitted(7);
    assert_eq!(a, b);
    // The target's variance is about 6.6; a fitted net should be far below it.
    assert!(mse < 0.5, "test mse {mse}");
    let x = data.features.select_rows(&[0, 1, 2]);
    assert_eq!(forward(&a, &x).unwrap(), forward(&b, &x).unwrap());
}

#[test]
fn single_precision_training_runs() {
    let data = split(&generate_synthetic(300, 0.1, 5), SplitFractions::train_test(0.8), 0).unwrap();
    let spec = ModelSpec::mlp(&[5, 8, 1], &[Activation::Relu, Activation::Linear], 1);
    let net: NetworkF32 = build_mlp(&spec).unwrap();
    let config = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 30,
        batch_size: 32,
        ..TrainConfig::default()
    };
    let (_, report) = train(&net, &data, &config).unwrap();
    assert!(report.test_metric.unwrap().is_finite());
}

#[test]
fn bundles_round_trip_and_reject_corruption() {
    let (spec, net, data, _) = fitted(3);
    let bundle = ModelBundle {
        spec,
        model: TrainedModel::Mlp(net),
        preprocessing: data.preprocessing.clone(),
        schema: None,
        columns: data.columns.clone(),
        groups: data.groups.clone(),
        feature_subset: None,
        train_seed: 3,
        metadata: serde_json::json!({"note": "test"}),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nns");
    bundle.save(&path).unwrap();
    assert_eq!(ModelBundle::load(&path).unwrap(), bundle);

    let mut bytes = Vec::new();
    write_bundle(&bundle, &mut bytes).unwrap();
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(read_bundle(bad_magic.as_slice()).is_err());
    assert!(read_bundle(&bytes[..bytes.len() - 4]).is_err());
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(read_bundle(trailing.as_slice()).is_err());
}
