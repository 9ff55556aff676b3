use doalab::datagen::{self, FrameStore, LabelSet};
use doalab::nn::{self, bce_loss, Model, ModelSpec, TrainConfig, BCE_EPS};
use doalab::RunConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn overfits_a_single_pair_within_three_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::desk_scale();
    cfg.train_grid.distances = vec![1.0];
    cfg.train_grid.pairs = Some(vec![[30.0, 120.0]]);
    cfg.train_grid.signal_duration_s = 80.0;
    let manifest = datagen::generate_dataset(&cfg.train_grid, &cfg.array, &cfg.features, 3, dir.path(), 1).unwrap();
    assert_eq!(manifest.total_records, 9999);
    let (_, store) = FrameStore::from_manifest(dir.path()).unwrap();

    let config = TrainConfig {
        epochs: 3,
        seed: 4,
        ..TrainConfig::default()
    };
    let mut model = Model::new(ModelSpec::default(), config.init_seed()).unwrap();
    let report = nn::train(&mut model, &store, &config, None).unwrap();
    assert_eq!(report.epochs.len(), 3);
    assert!(
        report.final_loss() < 0.25 * report.initial_loss,
        "loss {} -> {}",
        report.initial_loss,
        report.final_loss()
    );
}

#[test]
fn reloaded_checkpoint_reproduces_forward_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ModelSpec::default();
    let model = Model::new(spec.clone(), 21).unwrap();
    let path = dir.path().join("m.ckpt");
    nn::save_checkpoint(&model, &path).unwrap();
    let back = nn::load_checkpoint(&path).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let x: Vec<f64> = (0..spec.input_len()).map(|_| rng.random_range(-3.2..3.2)).collect();
        let a = model.infer(&x, 1).unwrap();
        let b = back.infer(&x, 1).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
    assert!(matches!(
        nn::load_checkpoint_for(&path, 4, 128, 37),
        Err(doalab::Error::Shape(_))
    ));
}

fn scalar_bce(probs: &[f64], labels: &[LabelSet], classes: usize) -> f64 {
    let mut total = 0.0;
    for (s, label) in labels.iter().enumerate() {
        for i in 0..classes {
            let p = probs[s * classes + i].clamp(BCE_EPS, 1.0 - BCE_EPS);
            total -= if label.contains(i) { p.ln() } else { (1.0 - p).ln() };
        }
    }
    total / labels.len() as f64
}

#[test]
fn bce_matches_a_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let batch = rng.random_range(1..20);
        let labels: Vec<LabelSet> = (0..batch)
            .map(|_| LabelSet::from_classes(&[rng.random_range(0..37), rng.random_range(0..37)]).unwrap())
            .collect();
        let probs: Vec<f64> = (0..batch * 37).map(|_| rng.random::<f64>()).collect();
        let (loss, _) = bce_loss(&probs, &labels, 37);
        let want = scalar_bce(&probs, &labels, 37);
        assert!((loss - want).abs() <= 1e-12 * want.abs().max(1.0));
    }
}

#[test]
fn bce_of_the_labels_themselves_is_near_zero() {
    let labels = [LabelSet::from_classes(&[4, 30]).unwrap()];
    let probs: Vec<f64> = (0..37).map(|i| if labels[0].contains(i) { 1.0 } else { 0.0 }).collect();
    assert!(bce_loss(&probs, &labels, 37).0 < 1e-5);
    let uniform = bce_loss(&[0.5; 37], &labels, 37).0;
    assert!((uniform - 37.0 * 2f64.ln()).abs() < 1e-12);
}
