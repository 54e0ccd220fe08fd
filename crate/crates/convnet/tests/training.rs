use causalnet_convnet::checkpoint::{load_network, save_network};
use causalnet_convnet::train::evaluate_split;
use causalnet_convnet::{train, ConvNet, ConvNetConfig, Dataset, NetError, SampleWeighting};
use causalnet_core::image::Label;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Left images carry a bump in the top rows, right images in the bottom rows.
fn toy(n: usize, seed: u64) -> Dataset {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let label = Label::from_index(i % 2);
        let img = Array2::from_shape_fn((6, 40), |(row, col)| {
            let top = row < 3;
            let on = (top == (label == Label::Left)) && (10..30).contains(&col);
            (if on { 1.0 } else { 0.0 }) + 0.3 * r.random_range(-1.0..1.0)
        });
        images.push(img);
        labels.push(label);
    }
    Dataset::new(images, labels, (0..n).collect()).unwrap()
}

fn small_config(seed: u64) -> ConvNetConfig {
    ConvNetConfig {
        temporal_kernel: 5,
        first_filters: 4,
        blocks: 2,
        batch_size: 4,
        max_epochs: 300,
        patience: 50,
        learning_rate: 1e-2,
        seed,
        ..Default::default()
    }
}

#[test]
fn overfits_twenty_samples() {
    let data = toy(20, 1);
    let all: Vec<usize> = (0..20).collect();
    let model = ConvNet::build(&small_config(3), 6, 40).unwrap();
    let out = train(model, &data, &all, &[1.0; 20]).unwrap();
    let (acc, _) = evaluate_split(&out.model, &data, &out.train_indices).unwrap();
    assert_eq!(acc, 1.0, "history {:?}", out.history.last());
    assert_eq!(out.history[0].epoch, 0);
    assert!(out.best_epoch >= 1);
    assert_eq!(out.train_indices.len() + out.val_indices.len(), 20);
}

#[test]
fn zero_epochs_keep_initial_parameters() {
    let data = toy(10, 2);
    let cfg = ConvNetConfig {
        max_epochs: 0,
        ..small_config(5)
    };
    let model = ConvNet::build(&cfg, 6, 40).unwrap();
    let out = train(model.clone(), &data, &(0..10).collect::<Vec<_>>(), &[1.0; 10]).unwrap();
    assert_eq!(out.model, model);
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.best_epoch, 0);
}

#[test]
fn training_is_reproducible() {
    let data = toy(12, 3);
    let cfg = ConvNetConfig {
        max_epochs: 5,
        ..small_config(9)
    };
    let idx: Vec<usize> = (0..12).collect();
    let a = train(ConvNet::build(&cfg, 6, 40).unwrap(), &data, &idx, &[1.0; 12]).unwrap();
    let b = train(ConvNet::build(&cfg, 6, 40).unwrap(), &data, &idx, &[1.0; 12]).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history.len(), b.history.len());
}

#[test]
fn single_class_is_rejected() {
    let mut data = toy(10, 4);
    data.labels = vec![Label::Left; 10];
    let model = ConvNet::build(&small_config(1), 6, 40).unwrap();
    assert!(matches!(
        train(model, &data, &(0..10).collect::<Vec<_>>(), &[1.0; 10]),
        Err(NetError::DegenerateLabels)
    ));
}

#[test]
fn bad_weights_are_rejected() {
    let data = toy(10, 5);
    let idx: Vec<usize> = (0..10).collect();
    let model = ConvNet::build(&small_config(1), 6, 40).unwrap();
    assert!(train(model.clone(), &data, &idx, &[1.0; 9]).is_err());
    let mut w = [1.0; 10];
    w[3] = f64::NAN;
    assert!(train(model, &data, &idx, &w).is_err());
}

#[test]
fn input_scale_weighting_trains() {
    let data = toy(16, 6);
    let cfg = ConvNetConfig {
        weighting: SampleWeighting::InputScale,
        max_epochs: 10,
        ..small_config(2)
    };
    let out = train(ConvNet::build(&cfg, 6, 40).unwrap(), &data, &(0..16).collect::<Vec<_>>(), &[1.0; 16]).unwrap();
    assert!(out.history.iter().skip(1).all(|h| h.train_loss.is_finite()));
}

#[test]
fn checkpoint_round_trip_predicts_identically() {
    let data = toy(12, 7);
    let cfg = ConvNetConfig {
        max_epochs: 3,
        ..small_config(4)
    };
    let out = train(ConvNet::build(&cfg, 6, 40).unwrap(), &data, &(0..12).collect::<Vec<_>>(), &[1.0; 12]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.bin");
    save_network(&out.model, &path).unwrap();
    let back = load_network(&path).unwrap();
    for img in &data.images {
        assert_eq!(back.predict_proba(img.view()).unwrap(), out.model.predict_proba(img.view()).unwrap());
    }
}
