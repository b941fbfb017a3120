use ddst_core::rng;
use ddst_neural::{
    evaluate, glorot_init, train, Activation, AdamConfig, Dataset, DatasetKind, MlpArchitecture, NeuralError, TrainingConfig,
};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

fn identity_set(rows: usize, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, 0);
    let x = Array2::from_shape_simple_fn((rows, 2), || r.sample::<f64, _>(StandardNormal));
    Dataset::new(DatasetKind::Ce, x.clone(), x, vec![f64::INFINITY; rows], (0..rows as u64).collect(), seed, "toy".into())
        .unwrap()
}

fn toy_arch() -> MlpArchitecture {
    MlpArchitecture::new(vec![2, 4, 2], vec![Activation::None, Activation::Relu, Activation::Linear], false).unwrap()
}

fn toy_config(epochs: usize, l2: f64) -> TrainingConfig {
    TrainingConfig {
        adam: AdamConfig { learning_rate: 1e-2, ..AdamConfig::default() },
        batch_size: 20,
        l2_coefficient: l2,
        epochs,
        patience: 0,
        shuffle_seed: 3,
    }
}

#[test]
fn identity_map_is_learned_within_2000_steps() {
    let tr = identity_set(400, 1);
    let va = identity_set(200, 2);
    let mut model = glorot_init(toy_arch(), 4).unwrap();
    // 20 batches per epoch, 100 epochs = 2000 steps.
    let report = train(&mut model, &tr, &va, &toy_config(100, 0.0)).unwrap();
    assert!(report.steps <= 2000);
    assert!(report.best_validation_loss < 1e-3, "{}", report.best_validation_loss);
    assert!(report.curve.last().unwrap().train_loss < 1e-3);
}

#[test]
fn best_snapshot_is_the_validation_argmin() {
    let tr = identity_set(200, 5);
    let va = identity_set(100, 6);
    let mut model = glorot_init(toy_arch(), 7).unwrap();
    let cfg = toy_config(30, 1e-3);
    let report = train(&mut model, &tr, &va, &cfg).unwrap();
    let min = report.curve.iter().map(|e| e.validation_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_validation_loss, min);
    assert!(report.best_validation_loss <= report.final_epoch().validation_loss);
    assert_eq!(report.curve[report.best_epoch - 1].validation_loss, min);
    // The returned model is that snapshot.
    assert!((evaluate(&model, &va, cfg.l2_coefficient).unwrap() - min).abs() < 1e-12);
}

#[test]
fn l2_grid_gives_distinct_converged_losses() {
    let tr = identity_set(200, 8);
    let va = identity_set(100, 9);
    let mut finals = Vec::new();
    for alpha in [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7] {
        let mut model = glorot_init(toy_arch(), 10).unwrap();
        let report = train(&mut model, &tr, &va, &toy_config(20, alpha)).unwrap();
        finals.push(report.best_validation_loss);
    }
    for i in 0..finals.len() {
        for j in i + 1..finals.len() {
            assert_ne!(finals[i], finals[j]);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let tr = identity_set(100, 11);
    let va = identity_set(50, 12);
    let run = || {
        let mut model = glorot_init(toy_arch(), 13).unwrap();
        let report = train(&mut model, &tr, &va, &toy_config(5, 1e-4)).unwrap();
        (model, report)
    };
    assert_eq!(run(), run());
}

#[test]
fn divergence_is_reported_with_step() {
    let mut tr = identity_set(40, 14);
    tr.labels.mapv_inplace(|v| v * 1e300);
    let va = identity_set(20, 15);
    let mut model = glorot_init(toy_arch(), 16).unwrap();
    let cfg = TrainingConfig { adam: AdamConfig { learning_rate: 1e3, ..AdamConfig::default() }, ..toy_config(3, 0.0) };
    match train(&mut model, &tr, &va, &cfg) {
        Err(NeuralError::Divergence { step, .. }) => assert!(step >= 1),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn width_mismatch_is_rejected_before_training() {
    let tr = identity_set(40, 17);
    let mut model = glorot_init(MlpArchitecture::ce_net(2), 18).unwrap();
    assert!(matches!(
        train(&mut model, &tr, &tr, &toy_config(1, 0.0)),
        Err(NeuralError::Dimension { expected: 4, found: 2 })
    ));
}

#[test]
fn default_configs() {
    let ce = TrainingConfig::ce_default();
    assert_eq!((ce.batch_size, ce.l2_coefficient, ce.epochs), (80, 1e-5, 10));
    assert_eq!((ce.adam.learning_rate, ce.adam.beta1, ce.adam.beta2, ce.adam.epsilon), (1e-4, 0.99, 0.999, 1e-8));
    let sd = TrainingConfig::sd_default();
    assert_eq!((sd.l2_coefficient, sd.epochs), (1e-7, 20));
    assert!(TrainingConfig { batch_size: 0, ..ce }.validate().is_err());
}
