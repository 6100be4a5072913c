//! Mini-batch Adam training with binary cross-entropy and optional early stopping,
//! shared by MSDN and the logistic base learner.

use std::time::Instant;

use crate::classifier::check_training_data;
use crate::error::{Error, Result};
use crate::layers::{bce_logit_grad, bce_loss, AdamConfig, Param};
use crate::numeric::{derive_seed, Matrix, Rng};

/// A network whose output layer is a sigmoid over logits, trained with BCE.
pub trait Network {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;

    /// Training-mode forward pass that caches activations for [`Network::backward_logits`].
    fn forward_train(&mut self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;

    /// Backpropagates a gradient with respect to the output logits, accumulating
    /// parameter gradients.
    fn backward_logits(&mut self, dlogits: &[f64]) -> Result<()>;

    /// Inference-mode forward pass.
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// All parameter values concatenated in a fixed layer order.
    fn flat_params(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.value.iter().copied())
            .collect()
    }

    fn flat_grads(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape {
                op: "set_flat_params",
                left: (self.param_count(), 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.value.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }
}

/// Mean BCE of a network over the given rows.
pub fn mean_loss<N: Network + ?Sized>(net: &N, x: &Matrix, y: &Matrix, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for &r in rows {
        total += bce_loss(&net.predict_proba(x.row(r))?, y.row(r))?;
    }
    Ok(total / rows.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; `None` trains for `max_epochs`.
    pub patience: Option<usize>,
    /// Fraction of the training rows held out to monitor early stopping.
    pub validation_fraction: f64,
    /// Relative decrease required to count as an improvement.
    pub min_rel_improvement: f64,
    pub seed: u64,
    pub budget_seconds: Option<f64>,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::contract("learning rate must be positive"));
        }
        if !(self.adam.weight_decay >= 0.0) {
            return Err(Error::contract("weight decay must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::contract("validation fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
    Budget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// Lowest monitored loss (validation loss, or training loss when no rows
    /// were held out).
    pub best_val_loss: f64,
    /// Epoch with the lowest monitored loss; 0 means the initial weights.
    /// Its weights are restored only when early stopping is enabled.
    pub best_epoch: usize,
    pub final_train_loss: f64,
    pub wall_time_secs: f64,
    pub stop_reason: StopReason,
    /// `train_history[0]` is the loss of the initial weights; entry `e` is the
    /// mean training-mode loss seen during epoch `e`.
    pub train_history: Vec<f64>,
    /// Monitored loss after each epoch, starting with the initial weights.
    pub val_history: Vec<f64>,
}

/// Splits `0..n` into (fit rows, held-out rows).
fn holdout(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut n_val = (fraction * n as f64).round() as usize;
    if n_val >= n {
        n_val = n - 1;
    }
    let perm = Rng::new(seed).shuffle(n);
    let (val, fit) = perm.split_at(n_val);
    let mut fit = fit.to_vec();
    let mut val = val.to_vec();
    fit.sort_unstable();
    val.sort_unstable();
    (fit, val)
}

/// Trains `net` in place and leaves it holding the best monitored weights.
pub fn fit_network<N: Network>(
    net: &mut N,
    x: &Matrix,
    y: &Matrix,
    settings: &TrainSettings,
) -> Result<TrainReport> {
    settings.validate()?;
    check_training_data(x, y)?;
    if x.cols() != net.input_dim() || y.cols() != net.output_dim() {
        return Err(Error::Shape {
            op: "fit",
            left: (net.input_dim(), net.output_dim()),
            right: (x.cols(), y.cols()),
        });
    }
    let started = Instant::now();
    let patience = settings.patience;
    let validation_fraction = if patience.is_some() {
        settings.validation_fraction
    } else {
        0.0
    };
    let (fit_rows, val_rows) = holdout(x.rows(), validation_fraction, derive_seed(settings.seed, 1));
    let mut order_rng = Rng::new(derive_seed(settings.seed, 2));
    let mut noise_rng = Rng::new(derive_seed(settings.seed, 3));

    let monitor = |net: &N| -> Result<f64> {
        if val_rows.is_empty() {
            mean_loss(net, x, y, &fit_rows)
        } else {
            mean_loss(net, x, y, &val_rows)
        }
    };

    let initial_train = mean_loss(net, x, y, &fit_rows)?;
    let mut best_loss = monitor(net)?;
    let mut best_epoch = 0;
    let mut best_params = net.flat_params();
    let mut train_history = vec![initial_train];
    let mut val_history = vec![best_loss];
    let mut since_best = 0;
    let mut stop_reason = StopReason::MaxEpochs;
    let mut epoch = 0;
    let mut order = fit_rows.clone();

    while epoch < settings.max_epochs {
        if let Some(budget) = settings.budget_seconds {
            if started.elapsed().as_secs_f64() > budget {
                stop_reason = StopReason::Budget;
                break;
            }
        }
        epoch += 1;
        order_rng.shuffle_in_place(&mut order);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(settings.batch_size) {
            net.zero_grad();
            for &r in batch {
                let p = net.forward_train(x.row(r), &mut noise_rng)?;
                epoch_loss += bce_loss(&p, y.row(r))?;
                net.backward_logits(&bce_logit_grad(&p, y.row(r)))?;
            }
            let scale = 1.0 / batch.len() as f64;
            for p in net.params_mut() {
                p.scale_grad(scale);
                p.step(&settings.adam)?;
            }
        }
        train_history.push(epoch_loss / order.len() as f64);

        let loss = monitor(net)?;
        val_history.push(loss);
        if loss < best_loss - settings.min_rel_improvement * best_loss.abs() {
            best_loss = loss;
            best_epoch = epoch;
            best_params = net.flat_params();
            since_best = 0;
        } else {
            since_best += 1;
            if patience.is_some_and(|p| since_best >= p) {
                stop_reason = StopReason::EarlyStopping;
                break;
            }
        }
    }

    // without early stopping the final weights are kept
    if patience.is_some() {
        net.set_flat_params(&best_params)?;
    }
    Ok(TrainReport {
        epochs_run: epoch,
        best_val_loss: best_loss,
        best_epoch,
        final_train_loss: *train_history.last().unwrap_or(&initial_train),
        wall_time_secs: started.elapsed().as_secs_f64(),
        stop_reason,
        train_history,
        val_history,
    })
}
