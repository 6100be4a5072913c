use msdn_core::baselines::{LogisticBase, LogisticConfig};
use msdn_core::classifier::MultiLabelClassifier;
use msdn_core::eval::ema;
use msdn_core::msdn::{MsdnConfig, MsdnModel};
use msdn_core::training::{Network, StopReason};
use msdn_core::{Matrix, Rng};

/// One feature, one label, `y = [x > 0.5]`.
fn threshold_toy(n: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = Rng::new(seed);
    let x = rng.uniform(0.0, 1.0, n, 1).unwrap();
    let y = x.map(|v| (v > 0.5) as u8 as f64);
    (x, y)
}

fn small_config() -> MsdnConfig {
    let mut c = MsdnConfig::new(1, 1);
    c.hidden_dim = 8;
    c.kernel_count = 4;
    c.learning_rate = 0.01;
    c.batch_size = 32;
    c.seed = 17;
    c
}

#[test]
fn separable_toy_reaches_high_training_accuracy() {
    let (x, y) = threshold_toy(200, 1);

    // the same data is nearly separable by a logistic model
    let oracle = LogisticBase::fit(
        &x,
        &y.column(0),
        &LogisticConfig {
            learning_rate: 0.1,
            epochs: 500,
            batch_size: 32,
            ..Default::default()
        },
    )
    .unwrap();
    let hits = (0..x.rows())
        .filter(|&r| (oracle.predict_proba(x.row(r)).unwrap() >= 0.5) == (y.get(r, 0) == 1.0))
        .count();
    assert!(hits as f64 / 200.0 >= 0.95, "logistic oracle {hits}/200");

    let mut cfg = small_config();
    cfg.max_epochs = 500;
    let (model, report) = MsdnModel::fit(&x, &y, &cfg).unwrap();
    assert!(report.epochs_run <= 500);
    let acc = ema(&model.predict(&x, 0.5).unwrap().labels, &y).unwrap();
    assert!(acc >= 0.95, "training ema {acc} after {} epochs", report.epochs_run);
}

#[test]
fn loss_decreases_by_epoch_100() {
    let (x, y) = threshold_toy(200, 2);
    let mut cfg = small_config();
    cfg.max_epochs = 100;
    cfg.patience = 1000;
    let (_, report) = MsdnModel::fit(&x, &y, &cfg).unwrap();
    assert_eq!(report.epochs_run, 100);
    assert_eq!(report.stop_reason, StopReason::MaxEpochs);
    assert!(report.train_history[100] < report.train_history[0]);
    assert!(report.val_history[100] < report.val_history[0]);
}

#[test]
fn identical_seeds_give_identical_weights() {
    let (x, y) = threshold_toy(150, 3);
    let mut cfg = small_config();
    cfg.max_epochs = 40;
    cfg.dropout = 0.25;
    let (a, ra) = MsdnModel::fit(&x, &y, &cfg).unwrap();
    let (b, rb) = MsdnModel::fit(&x, &y, &cfg).unwrap();
    let (fa, fb) = (a.flat_params(), b.flat_params());
    assert!(fa.iter().zip(&fb).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert_eq!(ra.train_history, rb.train_history);

    cfg.seed += 1;
    let (c, _) = MsdnModel::fit(&x, &y, &cfg).unwrap();
    assert_ne!(fa, c.flat_params());
}

#[test]
fn early_stopping_restores_the_best_epoch() {
    // noisy labels so the validation loss plateaus
    let mut rng = Rng::new(4);
    let x = rng.uniform(0.0, 1.0, 120, 3).unwrap();
    let y = rng.uniform(0.0, 1.0, 120, 2).unwrap().map(|v| (v > 0.5) as u8 as f64);
    let mut cfg = MsdnConfig::new(3, 2);
    cfg.hidden_dim = 6;
    cfg.kernel_count = 3;
    cfg.learning_rate = 0.05;
    cfg.patience = 5;
    cfg.max_epochs = 300;
    cfg.batch_size = 16;
    let (model, report) = MsdnModel::fit(&x, &y, &cfg).unwrap();
    assert_eq!(report.stop_reason, StopReason::EarlyStopping);
    assert!(report.epochs_run <= cfg.max_epochs);
    assert_eq!(report.val_history.len(), report.epochs_run + 1);
    for v in &report.val_history {
        assert!(report.best_val_loss <= *v);
    }
    assert_eq!(report.val_history[report.best_epoch], report.best_val_loss);
    assert!(report.epochs_run - report.best_epoch >= cfg.patience);

    // the returned weights reproduce the best validation loss
    let mut again = cfg.clone();
    again.max_epochs = report.best_epoch;
    again.patience = usize::MAX;
    let (replay, _) = MsdnModel::fit(&x, &y, &again).unwrap();
    let same = model
        .flat_params()
        .iter()
        .zip(replay.flat_params())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    assert!(same, "restored weights differ from a replay stopped at epoch {}", report.best_epoch);
}

#[test]
fn max_epochs_zero_keeps_initial_weights() {
    let (x, y) = threshold_toy(40, 5);
    let mut cfg = small_config();
    cfg.max_epochs = 0;
    let (model, report) = MsdnModel::fit(&x, &y, &cfg).unwrap();
    assert_eq!(report.epochs_run, 0);
    assert_eq!(model.flat_params(), MsdnModel::new(cfg).unwrap().flat_params());
}
