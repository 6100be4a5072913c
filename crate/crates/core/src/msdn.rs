//! Multi-scale label dependence relation network.
//!
//! ```text
//! x ─ Dense(m→h) ─ sigmoid ─ dropout ─┬─ conv k=1 ─ sigmoid ─ maxpool ─┐
//!                                      ├─ conv k=2 ─ sigmoid ─ maxpool ─┤
//!                                      ⋮                                ⋮ ─ Dense(K→d) ─ sigmoid ─ ŷ
//!                                      └─ conv k=K ─ sigmoid ─ maxpool ─┘
//! ```
//!
//! The dense encoder produces a mid-level label representation of length `h`.
//! Kernel `i` (size `i`, stride 1, no padding) slides over it and contributes
//! the maximum of its `h + 1 - i` responses, so each kernel summarizes
//! relations among `i` neighbouring hidden units. The decoder maps the `K`
//! pooled signals back to label probabilities.

use serde::{Deserialize, Serialize};

use crate::classifier::{check_threshold, check_training_data, decide, MultiLabelClassifier, Prediction};
use crate::error::{Error, Result};
use crate::layers::{bce_logit_grad, AdamConfig, ConvPoolBank, Dense, Dropout, Param, Sigmoid};
use crate::numeric::{derive_seed, Matrix, Rng};
use crate::training::{fit_network, Network, TrainReport, TrainSettings};

pub const LEARNING_RATE_GRID: [f64; 10] = [
    0.0005, 0.00075, 0.001, 0.0025, 0.005, 0.0075, 0.01, 0.025, 0.05, 0.075,
];
pub const DROPOUT_GRID: [f64; 3] = [0.0, 0.25, 0.5];
pub const WEIGHT_DECAY_GRID: [f64; 6] = [0.0, 0.00001, 0.000025, 0.00005, 0.000075, 0.0001];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MsdnConfig {
    pub input_dim: usize,
    pub label_dim: usize,
    pub hidden_dim: usize,
    /// Kernel `i` (1-based) has size `i`.
    pub kernel_count: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub min_rel_improvement: f64,
    pub seed: u64,
    pub budget_seconds: Option<f64>,
}

impl Default for MsdnConfig {
    fn default() -> Self {
        MsdnConfig {
            input_dim: 1,
            label_dim: 1,
            hidden_dim: 128,
            kernel_count: 128,
            learning_rate: 0.001,
            dropout: 0.0,
            weight_decay: 0.0,
            batch_size: 128,
            max_epochs: 10_000,
            patience: 100,
            validation_fraction: 0.1,
            min_rel_improvement: 1e-6,
            seed: 0,
            budget_seconds: None,
        }
    }
}

impl MsdnConfig {
    pub fn new(input_dim: usize, label_dim: usize) -> Self {
        MsdnConfig {
            input_dim,
            label_dim,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.label_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::contract("input, label and hidden dimensions must be positive"));
        }
        if self.kernel_count == 0 || self.kernel_count > self.hidden_dim {
            return Err(Error::contract(format!(
                "kernel count {} must lie in 1..={} (the hidden size)",
                self.kernel_count, self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::contract(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        self.train_settings().validate()
    }

    /// True when all three tuned hyperparameters are points of the reference grids.
    pub fn on_reference_grid(&self) -> bool {
        LEARNING_RATE_GRID.contains(&self.learning_rate)
            && DROPOUT_GRID.contains(&self.dropout)
            && WEIGHT_DECAY_GRID.contains(&self.weight_decay)
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            adam: AdamConfig::new(self.learning_rate, self.weight_decay),
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: Some(self.patience),
            validation_fraction: self.validation_fraction,
            min_rel_improvement: self.min_rel_improvement,
            seed: self.seed,
            budget_seconds: self.budget_seconds,
        }
    }
}

/// Parameter count per stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamBreakdown {
    pub dense: usize,
    pub conv: usize,
    pub decoder: usize,
}

impl ParamBreakdown {
    pub fn total(&self) -> usize {
        self.dense + self.conv + self.decoder
    }
}

/// Parameters of an MSDN with `m` inputs, `d` labels, hidden size `h` and `k` kernels:
/// `(m+1)h` for the encoder, `k(k+1)/2 + k` for the kernels (taps plus one bias
/// each) and `(k+1)d` for the decoder.
pub fn param_breakdown(m: usize, d: usize, h: usize, k: usize) -> Result<ParamBreakdown> {
    if k > h {
        return Err(Error::contract(format!(
            "kernel count {k} exceeds hidden size {h}; the largest kernel would not fit"
        )));
    }
    Ok(ParamBreakdown {
        dense: (m + 1) * h,
        conv: k * (k + 1) / 2 + k,
        decoder: (k + 1) * d,
    })
}

pub fn param_count(m: usize, d: usize, h: usize, k: usize) -> Result<usize> {
    param_breakdown(m, d, h, k).map(|b| b.total())
}

#[derive(Clone, Debug)]
pub struct MsdnModel {
    config: MsdnConfig,
    pub dense: Dense,
    hidden_act: Sigmoid,
    dropout: Dropout,
    pub bank: ConvPoolBank,
    pub decoder: Dense,
    output: Option<Vec<f64>>,
}

impl MsdnModel {
    /// Glorot-initialized model; the seed is derived from `config.seed`.
    pub fn new(config: MsdnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(derive_seed(config.seed, 0));
        let dense = Dense::glorot(config.input_dim, config.hidden_dim, &mut rng)?;
        let bank = ConvPoolBank::multi_scale(config.kernel_count, &mut rng)?;
        let decoder = Dense::glorot(config.kernel_count, config.label_dim, &mut rng)?;
        Ok(MsdnModel {
            dropout: Dropout::new(config.dropout)?,
            config,
            dense,
            hidden_act: Sigmoid::new(),
            bank,
            decoder,
            output: None,
        })
    }

    pub fn config(&self) -> &MsdnConfig {
        &self.config
    }

    /// Forward pass. In training mode activations are cached for backprop and
    /// dropout is active on the hidden representation.
    pub fn forward(&mut self, x: &[f64], training: bool, rng: &mut Rng) -> Result<Vec<f64>> {
        let z = self.dense.forward(x)?;
        let hidden = self.hidden_act.forward(&z);
        let hidden = self.dropout.forward(&hidden, rng, training);
        let pooled = self.bank.forward(&hidden)?;
        let logits = self.decoder.forward(&pooled)?;
        let p = crate::layers::sigmoid_vec(&logits);
        self.output = Some(p.clone());
        Ok(p)
    }

    /// Backpropagates BCE against `y` from the last forward pass.
    pub fn backward(&mut self, y: &[f64]) -> Result<()> {
        let p = self
            .output
            .as_ref()
            .ok_or_else(|| Error::contract("msdn: backward called before forward"))?;
        if y.len() != p.len() {
            return Err(Error::Shape {
                op: "msdn backward",
                left: (p.len(), 1),
                right: (y.len(), 1),
            });
        }
        let g = bce_logit_grad(p, y);
        self.backward_logits(&g)
    }

    /// Trains a fresh model on `(x, y)` with mini-batch Adam and early stopping.
    pub fn fit(x: &Matrix, y: &Matrix, config: &MsdnConfig) -> Result<(MsdnModel, TrainReport)> {
        check_training_data(x, y)?;
        let mut model = MsdnModel::new(config.clone())?;
        let report = fit_network(&mut model, x, y, &config.train_settings())?;
        Ok((model, report))
    }

    /// Probabilities and labels (`p >= threshold`) for every row of `x`.
    pub fn predict_matrix(&self, x: &Matrix, threshold: f64) -> Result<Prediction> {
        check_threshold(threshold)?;
        MultiLabelClassifier::predict(self, x, threshold)
    }
}

impl Network for MsdnModel {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn output_dim(&self) -> usize {
        self.config.label_dim
    }

    fn forward_train(&mut self, x: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.forward(x, true, rng)
    }

    fn backward_logits(&mut self, dlogits: &[f64]) -> Result<()> {
        let dpooled = self.decoder.backward(dlogits)?;
        let dhidden = self.bank.backward(&dpooled)?;
        let dhidden = self.dropout.backward(&dhidden)?;
        let dz = self.hidden_act.backward(&dhidden)?;
        self.dense.backward(&dz)?;
        Ok(())
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let hidden = crate::layers::sigmoid_vec(&self.dense.apply(x)?);
        let pooled = self.bank.apply(&hidden)?;
        Ok(crate::layers::sigmoid_vec(&self.decoder.apply(&pooled)?))
    }

    fn params(&self) -> Vec<&Param> {
        let mut out: Vec<&Param> = self.dense.params().into();
        for k in &self.bank.kernels {
            out.push(&k.weights);
            out.push(&k.bias);
        }
        out.extend(self.decoder.params());
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out: Vec<&mut Param> = self.dense.params_mut().into();
        for k in &mut self.bank.kernels {
            out.push(&mut k.weights);
            out.push(&mut k.bias);
        }
        out.extend(self.decoder.params_mut());
        out
    }
}

impl MultiLabelClassifier for MsdnModel {
    fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    fn label_dim(&self) -> usize {
        self.config.label_dim
    }

    fn predict_row(&self, x: &[f64], threshold: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.predict_proba(x)?;
        let labels = p.iter().map(|&v| decide(v, threshold)).collect();
        Ok((p, labels))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::bce_loss;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    fn small_config(seed: u64) -> MsdnConfig {
        MsdnConfig {
            input_dim: 5,
            label_dim: 3,
            hidden_dim: 8,
            kernel_count: 4,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn param_count_reference_values() {
        assert_eq!(param_count(103, 14, 128, 128).unwrap(), 23_502);
        assert_eq!(param_count(294, 6, 128, 128).unwrap(), 46_918);
        assert_eq!(param_count(1, 1, 1, 1).unwrap(), 6);
        assert!(param_count(4, 2, 8, 9).is_err());
        let b = param_breakdown(103, 14, 128, 128).unwrap();
        assert_eq!((b.dense, b.conv, b.decoder), (13_312, 8_384, 1_806));
    }

    #[test]
    fn forward_shape_and_range() {
        let model = MsdnModel::new(small_config(3)).unwrap();
        let mut rng = Rng::new(0);
        for _ in 0..20 {
            let x = rng.uniform_vec(-3.0, 3.0, 5).unwrap();
            let p = model.predict_proba(&x).unwrap();
            assert_eq!(p.len(), 3);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        assert!(model.predict_proba(&[0.0; 4]).is_err());
    }

    #[test]
    fn zero_model_is_constant() {
        let mut model = MsdnModel::new(small_config(1)).unwrap();
        let zeros = vec![0.0; model.param_count()];
        model.set_flat_params(&zeros).unwrap();
        let a = model.predict_proba(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let b = model.predict_proba(&[-1.0, 0.0, 9.0, 0.5, 0.1]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, vec![0.5; 3]);
    }

    #[test]
    fn largest_kernel_sees_single_position() {
        let config = MsdnConfig::new(3, 2);
        let model = MsdnModel::new(config).unwrap();
        let sizes: Vec<usize> = model.bank.kernels.iter().map(|k| k.size()).collect();
        assert_eq!(sizes, (1..=128).collect::<Vec<_>>());
        let mut m = model.clone();
        m.forward(&[0.1, 0.2, 0.3], false, &mut Rng::new(0)).unwrap();
        let argmax = m.bank.last_argmax().unwrap();
        assert_eq!(argmax[127], 0);
        assert!(argmax.iter().enumerate().all(|(i, &j)| j < 129 - (i + 1)));
    }

    #[test]
    fn predict_threshold_and_empty_input() {
        let mut model = MsdnModel::new(small_config(2)).unwrap();
        model.set_flat_params(&vec![0.0; model.param_count()]).unwrap();
        let x = Matrix::zeros(2, 5);
        let pred = model.predict_matrix(&x, 0.5).unwrap();
        assert!(pred.labels.as_slice().iter().all(|&v| v == 1.0));
        assert!(model.predict_matrix(&x, 1.0).is_err());
        assert!(model.predict_matrix(&x, 0.0).is_err());
        let empty = model.predict_matrix(&Matrix::zeros(0, 5), 0.5).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.labels.cols(), 3);
        assert!(model.predict_matrix(&Matrix::zeros(2, 4), 0.5).is_err());
    }

    #[test]
    fn backward_before_forward_is_rejected() {
        let mut model = MsdnModel::new(small_config(2)).unwrap();
        assert!(model.backward(&[0.0; 3]).is_err());
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut model = MsdnModel::new(small_config(seed)).unwrap();
            let mut rng = Rng::new(seed + 100);
            let x = rng.uniform_vec(0.0, 1.0, 5).unwrap();
            let y: Vec<f64> = (0..3).map(|_| rng.below(2) as f64).collect();
            model.zero_grad();
            model.forward(&x, false, &mut rng).unwrap();
            model.backward(&y).unwrap();
            let analytic = model.flat_grads();
            let base = model.flat_params();
            let mut probe = model.clone();
            for i in 0..base.len() {
                let mut loss_at = |v: f64| {
                    let mut p = base.clone();
                    p[i] = v;
                    probe.set_flat_params(&p).unwrap();
                    bce_loss(&probe.predict_proba(&x).unwrap(), &y).unwrap()
                };
                let fd = (loss_at(base[i] + 1e-5) - loss_at(base[i] - 1e-5)) / 2e-5;
                let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
                assert!(rel < 1e-4, "seed {seed} param {i}: analytic {} fd {fd}", analytic[i]);
            }
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let x = Matrix::from_rows(&[[0.1], [0.9]]).unwrap();
        let y = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let config = MsdnConfig {
            hidden_dim: 4,
            kernel_count: 2,
            max_epochs: 0,
            ..MsdnConfig::new(1, 1)
        };
        let (model, report) = MsdnModel::fit(&x, &y, &config).unwrap();
        assert_eq!(report.epochs_run, 0);
        assert_eq!(model.flat_params(), MsdnModel::new(config).unwrap().flat_params());
    }

    #[test]
    fn fit_rejects_bad_data() {
        let config = MsdnConfig { hidden_dim: 4, kernel_count: 2, ..MsdnConfig::new(1, 1) };
        let empty = Matrix::zeros(0, 1);
        assert!(MsdnModel::fit(&empty, &Matrix::zeros(0, 1), &config).is_err());
        let x = Matrix::from_rows(&[[0.1], [0.9]]).unwrap();
        let y = Matrix::from_rows(&[[0.0], [2.0]]).unwrap();
        assert!(matches!(MsdnModel::fit(&x, &y, &config), Err(Error::Validation(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn param_count_matches_constructed_model(m in 1usize..20, d in 1usize..10, h in 1usize..40, k_frac in 0.0f64..1.0) {
            let k = 1 + ((h - 1) as f64 * k_frac) as usize;
            let config = MsdnConfig { input_dim: m, label_dim: d, hidden_dim: h, kernel_count: k, ..Default::default() };
            let model = MsdnModel::new(config).unwrap();
            prop_assert_eq!(model.flat_params().len(), param_count(m, d, h, k).unwrap());
        }
    }
}
