//! Problem-transformation baselines over a logistic-regression base learner.
//!
//! * [`BinaryRelevance`]: one independent classifier per label.
//! * [`ChainModel`]: classifier `j` in the chain sees the features plus the
//!   labels earlier in the chain. Trained with the true earlier labels; greedy
//!   prediction feeds its own hard decisions forward.
//! * [`Pcc`]: the same chain, but prediction searches all `2^d` label vectors
//!   for the maximum of `prod_j p(y_j | x, y_<j)`.
//! * [`StackModel`]: a second binary-relevance level that sees the features
//!   plus the first level's raw probabilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{check_training_data, decide, MultiLabelClassifier};
use crate::error::{Error, Result};
use crate::layers::{sigmoid, AdamConfig, Dense, Param};
use crate::numeric::{dot, Matrix, Rng};
use crate::training::{fit_network, Network, TrainSettings};

pub const DEFAULT_PCC_D_MAX: usize = 20;

/// Anything that yields `p(y = 1 | input)`.
pub trait BinaryClassifier {
    fn input_dim(&self) -> usize;
    fn predict_proba(&self, x: &[f64]) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            learning_rate: 0.01,
            weight_decay: 0.0,
            epochs: 200,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl LogisticConfig {
    fn settings(&self) -> TrainSettings {
        TrainSettings {
            adam: AdamConfig::new(self.learning_rate, self.weight_decay),
            batch_size: self.batch_size,
            max_epochs: self.epochs,
            patience: None,
            validation_fraction: 0.0,
            min_rel_improvement: 0.0,
            seed: self.seed,
            budget_seconds: None,
        }
    }
}

/// Logistic regression, trained as a one-unit sigmoid layer with Adam + BCE.
#[derive(Clone, Debug)]
pub struct LogisticBase {
    layer: Dense,
}

impl LogisticBase {
    /// Zero-initialized model (the loss is convex, so no random init is needed).
    pub fn zeros(input_dim: usize) -> Self {
        LogisticBase {
            layer: Dense::zeros(input_dim, 1),
        }
    }

    pub fn from_parts(weights: Vec<f64>, bias: f64) -> Self {
        let mut base = LogisticBase::zeros(weights.len());
        base.layer.weights.value = weights;
        base.layer.bias.value[0] = bias;
        base
    }

    pub fn weights(&self) -> &[f64] {
        &self.layer.weights.value
    }

    pub fn input_dim(&self) -> usize {
        self.layer.in_dim()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.layer.in_dim() {
            return Err(Error::Shape {
                op: "logistic predict",
                left: (self.layer.in_dim(), 1),
                right: (x.len(), 1),
            });
        }
        Ok(sigmoid(dot(&self.layer.weights.value, x) + self.layer.bias.value[0]))
    }

    pub fn bias(&self) -> f64 {
        self.layer.bias.value[0]
    }

    /// Fits `p(y = 1 | x)` on the rows of `x` against the 0/1 targets `y`.
    pub fn fit(x: &Matrix, y: &[f64], config: &LogisticConfig) -> Result<Self> {
        let y = Matrix::from_vec(y.len(), 1, y.to_vec())?;
        check_training_data(x, &y)?;
        let mut model = LogisticBase::zeros(x.cols());
        fit_network(&mut model, x, &y, &config.settings())?;
        Ok(model)
    }
}

impl BinaryClassifier for LogisticBase {
    fn input_dim(&self) -> usize {
        LogisticBase::input_dim(self)
    }

    fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        LogisticBase::predict_proba(self, x)
    }
}

impl Network for LogisticBase {
    fn input_dim(&self) -> usize {
        self.layer.in_dim()
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn forward_train(&mut self, x: &[f64], _rng: &mut Rng) -> Result<Vec<f64>> {
        Ok(vec![sigmoid(self.layer.forward(x)?[0])])
    }

    fn backward_logits(&mut self, dlogits: &[f64]) -> Result<()> {
        self.layer.backward(dlogits).map(|_| ())
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        LogisticBase::predict_proba(self, x).map(|p| vec![p])
    }

    fn params(&self) -> Vec<&Param> {
        self.layer.params().into()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layer.params_mut().into()
    }
}

fn check_labels(x: &Matrix, y: &Matrix) -> Result<()> {
    check_training_data(x, y)?;
    if y.cols() == 0 {
        return Err(Error::contract("at least one label is required"));
    }
    Ok(())
}

fn fit_columns(x: &Matrix, y: &Matrix, config: &LogisticConfig) -> Result<Vec<LogisticBase>> {
    (0..y.cols())
        .into_par_iter()
        .map(|j| LogisticBase::fit(x, &y.column(j), config))
        .collect()
}

#[derive(Clone, Debug)]
pub struct BinaryRelevance {
    pub models: Vec<LogisticBase>,
}

impl BinaryRelevance {
    pub fn fit(x: &Matrix, y: &Matrix, config: &LogisticConfig) -> Result<Self> {
        check_labels(x, y)?;
        Ok(BinaryRelevance {
            models: fit_columns(x, y, config)?,
        })
    }

    pub fn from_models(models: Vec<LogisticBase>) -> Result<Self> {
        let m = models.first().map(|b| b.input_dim()).unwrap_or(0);
        if models.is_empty() || models.iter().any(|b| b.input_dim() != m) {
            return Err(Error::contract(
                "binary relevance needs at least one model, all with the same input size",
            ));
        }
        Ok(BinaryRelevance { models })
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|b| b.predict_proba(x)).collect()
    }
}

impl MultiLabelClassifier for BinaryRelevance {
    fn input_dim(&self) -> usize {
        self.models[0].input_dim()
    }

    fn label_dim(&self) -> usize {
        self.models.len()
    }

    fn predict_row(&self, x: &[f64], threshold: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.probabilities(x)?;
        let labels = p.iter().map(|&v| decide(v, threshold)).collect();
        Ok((p, labels))
    }
}

/// Result of running a chain on one instance. Vectors are in label-column order.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutput {
    pub labels: Vec<f64>,
    /// Greedy: `p(y_j = 1 | x, earlier predicted labels)`.
    /// Exhaustive: the exact marginal `p(y_j = 1 | x)` under the chain.
    pub probabilities: Vec<f64>,
    /// `prod_j p(y_j | x, y_<j)` of `labels`.
    pub joint: f64,
}

/// Checks that `order` is a permutation of `0..d`.
pub fn check_order(order: &[usize], d: usize) -> Result<()> {
    let mut seen = vec![false; d];
    if order.len() != d {
        return Err(Error::contract(format!(
            "chain order has {} entries for {d} labels",
            order.len()
        )));
    }
    for &j in order {
        if j >= d || seen[j] {
            return Err(Error::contract(format!(
                "chain order {order:?} is not a permutation of 0..{d}"
            )));
        }
        seen[j] = true;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct ChainModel<B = LogisticBase> {
    input_dim: usize,
    /// `order[pos]` is the label column predicted at chain position `pos`.
    order: Vec<usize>,
    models: Vec<B>,
}

impl ChainModel<LogisticBase> {
    /// Fits the chain with teacher forcing: position `pos` is trained on the
    /// features plus the true labels of positions `0..pos`.
    pub fn fit(x: &Matrix, y: &Matrix, config: &LogisticConfig, order: &[usize]) -> Result<Self> {
        check_labels(x, y)?;
        check_order(order, y.cols())?;
        let models = (0..order.len())
            .into_par_iter()
            .map(|pos| {
                let inputs = x.hstack(&y.select_columns(&order[..pos]))?;
                LogisticBase::fit(&inputs, &y.column(order[pos]), config)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ChainModel {
            input_dim: x.cols(),
            order: order.to_vec(),
            models,
        })
    }
}

impl<B: BinaryClassifier> ChainModel<B> {
    pub fn from_parts(input_dim: usize, order: Vec<usize>, models: Vec<B>) -> Result<Self> {
        check_order(&order, models.len())?;
        if models.is_empty() {
            return Err(Error::contract("a chain needs at least one label"));
        }
        for (pos, b) in models.iter().enumerate() {
            if b.input_dim() != input_dim + pos {
                return Err(Error::contract(format!(
                    "chain position {pos} takes {} inputs, expected {}",
                    b.input_dim(),
                    input_dim + pos
                )));
            }
        }
        Ok(ChainModel {
            input_dim,
            order,
            models,
        })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn models(&self) -> &[B] {
        &self.models
    }

    pub fn label_count(&self) -> usize {
        self.models.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Shape {
                op: "chain predict",
                left: (self.input_dim, 1),
                right: (x.len(), 1),
            });
        }
        Ok(())
    }

    /// `prod_j p(y_j | x, y_<j)` for a full label vector in column order.
    pub fn joint_probability(&self, x: &[f64], labels: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        if labels.len() != self.models.len() {
            return Err(Error::contract("label vector length does not match the chain"));
        }
        let mut buf = x.to_vec();
        let mut joint = 1.0;
        for (pos, model) in self.models.iter().enumerate() {
            let p = model.predict_proba(&buf)?;
            let y = labels[self.order[pos]];
            joint *= if y == 1.0 { p } else { 1.0 - p };
            buf.push(y);
        }
        Ok(joint)
    }

    /// Greedy chain inference: each position takes its most probable value
    /// (`p >= threshold`) and passes that hard decision on.
    pub fn greedy(&self, x: &[f64], threshold: f64) -> Result<ChainOutput> {
        self.check_input(x)?;
        let d = self.models.len();
        let mut labels = vec![0.0; d];
        let mut probabilities = vec![0.0; d];
        let mut buf = x.to_vec();
        let mut joint = 1.0;
        for (pos, model) in self.models.iter().enumerate() {
            let p = model.predict_proba(&buf)?;
            let y = decide(p, threshold);
            joint *= if y == 1.0 { p } else { 1.0 - p };
            labels[self.order[pos]] = y;
            probabilities[self.order[pos]] = p;
            buf.push(y);
        }
        Ok(ChainOutput {
            labels,
            probabilities,
            joint,
        })
    }

    /// Exact MAP assignment by exhaustive search over all `2^d` label vectors.
    ///
    /// Ties in the joint are broken towards the smallest binary value of the
    /// label vector read in column order (column 0 most significant).
    pub fn map_assignment(&self, x: &[f64], d_max: usize) -> Result<ChainOutput> {
        self.check_input(x)?;
        let d = self.models.len();
        if d > d_max {
            return Err(Error::TooManyLabels { d, d_max });
        }
        let mut search = MapSearch {
            chain: self,
            buf: x.to_vec(),
            prefix: vec![0.0; d],
            best_log: f64::NEG_INFINITY,
            best_key: u64::MAX,
            best: vec![0.0; d],
            marginal: vec![0.0; d],
            total: 0.0,
        };
        search.descend(0, 0.0)?;
        let MapSearch {
            best,
            best_log,
            marginal,
            total,
            ..
        } = search;
        let probabilities = marginal.iter().map(|m| m / total).collect();
        Ok(ChainOutput {
            labels: best,
            probabilities,
            joint: best_log.exp(),
        })
    }
}

struct MapSearch<'a, B> {
    chain: &'a ChainModel<B>,
    buf: Vec<f64>,
    /// Current partial assignment in column order.
    prefix: Vec<f64>,
    best_log: f64,
    best_key: u64,
    best: Vec<f64>,
    marginal: Vec<f64>,
    total: f64,
}

impl<B: BinaryClassifier> MapSearch<'_, B> {
    fn key(labels: &[f64]) -> u64 {
        labels
            .iter()
            .fold(0u64, |acc, &y| (acc << 1) | (y == 1.0) as u64)
    }

    fn descend(&mut self, pos: usize, log_joint: f64) -> Result<()> {
        let d = self.chain.models.len();
        if pos == d {
            let joint = log_joint.exp();
            self.total += joint;
            for (m, &y) in self.marginal.iter_mut().zip(&self.prefix) {
                *m += joint * y;
            }
            let key = Self::key(&self.prefix);
            if log_joint > self.best_log || (log_joint == self.best_log && key < self.best_key) {
                self.best_log = log_joint;
                self.best_key = key;
                self.best.copy_from_slice(&self.prefix);
            }
            return Ok(());
        }
        let p = self.chain.models[pos].predict_proba(&self.buf)?;
        let column = self.chain.order[pos];
        for (y, py) in [(0.0, 1.0 - p), (1.0, p)] {
            self.prefix[column] = y;
            self.buf.push(y);
            self.descend(pos + 1, log_joint + py.ln())?;
            self.buf.pop();
        }
        self.prefix[column] = 0.0;
        Ok(())
    }
}

impl<B: BinaryClassifier> MultiLabelClassifier for ChainModel<B> {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn label_dim(&self) -> usize {
        self.models.len()
    }

    fn predict_row(&self, x: &[f64], threshold: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.greedy(x, threshold)?;
        Ok((out.probabilities, out.labels))
    }
}

/// A chain queried by exhaustive MAP search instead of greedily.
#[derive(Clone, Debug)]
pub struct Pcc<B = LogisticBase> {
    pub chain: ChainModel<B>,
    pub d_max: usize,
}

impl<B: BinaryClassifier> Pcc<B> {
    pub fn new(chain: ChainModel<B>, d_max: usize) -> Result<Self> {
        let d = chain.label_count();
        if d > d_max {
            return Err(Error::TooManyLabels { d, d_max });
        }
        Ok(Pcc { chain, d_max })
    }
}

impl Pcc<LogisticBase> {
    /// Refuses before any training when the label space is too large.
    pub fn fit(
        x: &Matrix,
        y: &Matrix,
        config: &LogisticConfig,
        order: &[usize],
        d_max: usize,
    ) -> Result<Self> {
        if y.cols() > d_max {
            return Err(Error::TooManyLabels { d: y.cols(), d_max });
        }
        Pcc::new(ChainModel::fit(x, y, config, order)?, d_max)
    }
}

impl<B: BinaryClassifier> MultiLabelClassifier for Pcc<B> {
    fn input_dim(&self) -> usize {
        self.chain.input_dim
    }

    fn label_dim(&self) -> usize {
        self.chain.label_count()
    }

    /// The threshold is unused: labels are the joint MAP, probabilities are
    /// exact marginals.
    fn predict_row(&self, x: &[f64], _threshold: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.chain.map_assignment(x, self.d_max)?;
        Ok((out.probabilities, out.labels))
    }
}

#[derive(Clone, Debug)]
pub struct StackModel {
    pub level1: BinaryRelevance,
    /// Input is the features followed by the level-1 probabilities.
    pub level2: BinaryRelevance,
}

impl StackModel {
    pub fn fit(x: &Matrix, y: &Matrix, config: &LogisticConfig) -> Result<Self> {
        let level1 = BinaryRelevance::fit(x, y, config)?;
        let mut first = Matrix::zeros(x.rows(), y.cols());
        for r in 0..x.rows() {
            first.row_mut(r).copy_from_slice(&level1.probabilities(x.row(r))?);
        }
        let level2 = Self::fit_second_level(x, &first, y, config)?;
        Ok(StackModel { level1, level2 })
    }

    /// Trains the second level on `features ++ level1_outputs`.
    pub fn fit_second_level(
        x: &Matrix,
        level1_outputs: &Matrix,
        y: &Matrix,
        config: &LogisticConfig,
    ) -> Result<BinaryRelevance> {
        if level1_outputs.cols() != y.cols() {
            return Err(Error::contract(
                "level-1 outputs must have one column per label",
            ));
        }
        BinaryRelevance::fit(&x.hstack(level1_outputs)?, y, config)
    }

    pub fn from_levels(level1: BinaryRelevance, level2: BinaryRelevance) -> Result<Self> {
        let (m, d) = (level1.input_dim(), level1.label_dim());
        if level2.input_dim() != m + d || level2.label_dim() != d {
            return Err(Error::contract(format!(
                "second level must map {} inputs to {d} labels",
                m + d
            )));
        }
        Ok(StackModel { level1, level2 })
    }

    pub fn second_level_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut input = x.to_vec();
        input.extend(self.level1.probabilities(x)?);
        Ok(input)
    }
}

impl MultiLabelClassifier for StackModel {
    fn input_dim(&self) -> usize {
        self.level1.input_dim()
    }

    fn label_dim(&self) -> usize {
        self.level1.label_dim()
    }

    fn predict_row(&self, x: &[f64], threshold: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.level2.predict_row(&self.second_level_input(x)?, threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::cell::RefCell;

    /// Conditional probability table: ignores the features, looks up
    /// `p(y = 1)` by the binary value of the earlier chain labels.
    #[derive(Clone, Debug)]
    struct Table {
        features: usize,
        probs: Vec<f64>,
    }

    impl BinaryClassifier for Table {
        fn input_dim(&self) -> usize {
            self.features + self.probs.len().trailing_zeros() as usize
        }

        fn predict_proba(&self, x: &[f64]) -> Result<f64> {
            let idx = x[self.features..]
                .iter()
                .fold(0usize, |acc, &y| (acc << 1) | (y == 1.0) as usize);
            Ok(self.probs[idx])
        }
    }

    fn two_label_chain(p1: f64, p2_given_1: f64, p2_given_0: f64) -> ChainModel<Table> {
        ChainModel::from_parts(
            1,
            vec![0, 1],
            vec![
                Table { features: 1, probs: vec![p1] },
                Table { features: 1, probs: vec![p2_given_0, p2_given_1] },
            ],
        )
        .unwrap()
    }

    #[test]
    fn greedy_chain_two_labels() {
        let chain = two_label_chain(0.6, 0.3, 0.9);
        let out = chain.greedy(&[0.0], 0.5).unwrap();
        assert_eq!(out.labels, vec![1.0, 0.0]);
        assert_abs_diff_eq!(out.joint, 0.42, epsilon = 1e-12);
    }

    #[test]
    fn pcc_enumeration_examples() {
        let chain = two_label_chain(0.6, 0.3, 0.9);
        for (labels, joint) in [([1.0, 1.0], 0.18), ([1.0, 0.0], 0.42), ([0.0, 1.0], 0.36), ([0.0, 0.0], 0.04)] {
            assert_abs_diff_eq!(chain.joint_probability(&[0.0], &labels).unwrap(), joint, epsilon = 1e-12);
        }
        let map = chain.map_assignment(&[0.0], 20).unwrap();
        assert_eq!(map.labels, vec![1.0, 0.0]);
        assert_abs_diff_eq!(map.probabilities[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(map.probabilities[1], 0.18 + 0.36, epsilon = 1e-12);

        // greedy commits to y1 = 1 and loses the better (0, 1)
        let chain = two_label_chain(0.6, 0.5, 0.99);
        let map = chain.map_assignment(&[0.0], 20).unwrap();
        assert_eq!(map.labels, vec![0.0, 1.0]);
        assert_abs_diff_eq!(map.joint, 0.396, epsilon = 1e-12);
        let greedy = chain.greedy(&[0.0], 0.5).unwrap();
        assert_eq!(greedy.labels[0], 1.0);
        assert_abs_diff_eq!(greedy.joint, 0.30, epsilon = 1e-12);
    }

    #[test]
    fn pcc_ties_prefer_lowest_binary_value() {
        let chain = two_label_chain(0.5, 0.5, 0.5);
        assert_eq!(chain.map_assignment(&[0.0], 20).unwrap().labels, vec![0.0, 0.0]);
    }

    #[test]
    fn pcc_single_label_is_thresholded_marginal() {
        for p in [0.2, 0.7] {
            let chain = ChainModel::from_parts(1, vec![0], vec![Table { features: 1, probs: vec![p] }]).unwrap();
            let out = chain.map_assignment(&[0.3], 20).unwrap();
            assert_eq!(out.labels, vec![decide(p, 0.5)]);
        }
    }

    #[test]
    fn pcc_refuses_large_label_spaces() {
        let x = Matrix::zeros(4, 1);
        let y = Matrix::zeros(4, 22);
        let order: Vec<usize> = (0..22).collect();
        let err = Pcc::fit(&x, &y, &LogisticConfig::default(), &order, 20).unwrap_err();
        assert!(matches!(err, Error::TooManyLabels { d: 22, d_max: 20 }));
        assert!(err.to_string().contains("exponentially"));
    }

    #[test]
    fn chain_rejects_bad_order() {
        assert!(check_order(&[0, 0], 2).is_err());
        assert!(check_order(&[0, 2], 2).is_err());
        assert!(check_order(&[1], 2).is_err());
        assert!(check_order(&[1, 0], 2).is_ok());
        let x = Matrix::zeros(2, 1);
        let y = Matrix::zeros(2, 2);
        assert!(ChainModel::fit(&x, &y, &LogisticConfig::default(), &[1, 1]).is_err());
    }

    struct Probe {
        features: usize,
        position: usize,
        seen: RefCell<Vec<Vec<f64>>>,
        p: f64,
    }

    impl BinaryClassifier for Probe {
        fn input_dim(&self) -> usize {
            self.features + self.position
        }

        fn predict_proba(&self, x: &[f64]) -> Result<f64> {
            self.seen.borrow_mut().push(x.to_vec());
            Ok(self.p)
        }
    }

    #[test]
    fn greedy_feeds_hard_predictions_forward() {
        let ps = [0.8, 0.3, 0.6];
        let probes: Vec<Probe> = ps
            .iter()
            .enumerate()
            .map(|(pos, &p)| Probe { features: 2, position: pos, seen: RefCell::new(vec![]), p })
            .collect();
        let chain = ChainModel::from_parts(2, vec![2, 0, 1], probes).unwrap();
        let out = chain.greedy(&[0.5, -1.0], 0.5).unwrap();
        assert_eq!(chain.models()[0].seen.borrow()[0], vec![0.5, -1.0]);
        assert_eq!(chain.models()[1].seen.borrow()[0], vec![0.5, -1.0, 1.0]);
        assert_eq!(chain.models()[2].seen.borrow()[0], vec![0.5, -1.0, 1.0, 0.0]);
        // order [2, 0, 1]: column 2 <- 0.8, column 0 <- 0.3, column 1 <- 0.6
        assert_eq!(out.labels, vec![0.0, 1.0, 1.0]);
    }

    fn toy_data(n: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = Rng::new(seed);
        let x = rng.uniform(0.0, 1.0, n, 3).unwrap();
        let mut y = Matrix::zeros(n, 3);
        for r in 0..n {
            let row = x.row(r).to_vec();
            y.set(r, 0, (row[0] > 0.5) as u8 as f64);
            y.set(r, 1, (row[1] + row[2] > 1.0) as u8 as f64);
            y.set(r, 2, (row[0] < 0.3) as u8 as f64);
        }
        (x, y)
    }

    #[test]
    fn br_single_label_equals_logistic() {
        let (x, y) = toy_data(60, 1);
        let y0 = y.select_columns(&[0]);
        let cfg = LogisticConfig { epochs: 30, ..Default::default() };
        let br = BinaryRelevance::fit(&x, &y0, &cfg).unwrap();
        let lr = LogisticBase::fit(&x, &y0.column(0), &cfg).unwrap();
        assert_eq!(br.models[0].weights(), lr.weights());
        assert_eq!(br.models[0].bias(), lr.bias());
    }

    #[test]
    fn br_constant_zero_label_predicts_negative() {
        let (x, _) = toy_data(80, 2);
        let y = Matrix::zeros(80, 1);
        let br = BinaryRelevance::fit(&x, &y, &LogisticConfig { epochs: 50, ..Default::default() }).unwrap();
        let pred = br.predict(&x, 0.5).unwrap();
        // the optimal constant predictor is the label mean, 0
        assert!(pred.probabilities.as_slice().iter().all(|&p| p < 0.5));
        assert!(pred.labels.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn br_commutes_with_label_permutation() {
        let (x, y) = toy_data(100, 3);
        let cfg = LogisticConfig { epochs: 20, ..Default::default() };
        let perm = [2, 0, 1];
        let a = BinaryRelevance::fit(&x, &y, &cfg).unwrap().predict(&x, 0.5).unwrap();
        let b = BinaryRelevance::fit(&x, &y.select_columns(&perm), &cfg).unwrap().predict(&x, 0.5).unwrap();
        assert_eq!(a.probabilities.select_columns(&perm), b.probabilities);
    }

    #[test]
    fn cc_single_label_equals_br() {
        let (x, y) = toy_data(60, 4);
        let y0 = y.select_columns(&[1]);
        let cfg = LogisticConfig { epochs: 20, ..Default::default() };
        let br = BinaryRelevance::fit(&x, &y0, &cfg).unwrap().predict(&x, 0.5).unwrap();
        let cc = ChainModel::fit(&x, &y0, &cfg, &[0]).unwrap().predict(&x, 0.5).unwrap();
        assert_eq!(br, cc);
    }

    #[test]
    fn cc_relabeling_is_consistent() {
        let (x, y) = toy_data(100, 5);
        let cfg = LogisticConfig { epochs: 20, ..Default::default() };
        let order = [1, 2, 0];
        let a = ChainModel::fit(&x, &y, &cfg, &order).unwrap().predict(&x, 0.5).unwrap();
        // new column c holds old column perm[c]; old column j now lives at inv[j]
        let perm = [2, 0, 1];
        let inv = [1, 2, 0];
        let permuted_order: Vec<usize> = order.iter().map(|&j| inv[j]).collect();
        let b = ChainModel::fit(&x, &y.select_columns(&perm), &cfg, &permuted_order)
            .unwrap()
            .predict(&x, 0.5)
            .unwrap();
        assert_eq!(a.labels.select_columns(&perm), b.labels);
        assert_eq!(a.probabilities.select_columns(&perm), b.probabilities);
    }

    #[test]
    fn sta_shapes_and_perfect_first_level() {
        let mut rng = Rng::new(6);
        let x = rng.uniform(0.0, 1.0, 50, 4).unwrap();
        let y = Matrix::from_vec(50, 3, (0..150).map(|_| rng.below(2) as f64).collect()).unwrap();
        let cfg = LogisticConfig { epochs: 300, learning_rate: 0.05, ..Default::default() };
        let sta = StackModel::fit(&x, &y, &cfg).unwrap();
        assert_eq!(sta.level2.input_dim(), 4 + 3);
        assert_eq!(sta.second_level_input(x.row(0)).unwrap().len(), 7);

        // an oracle first level hands the labels to level 2 verbatim
        let level2 = StackModel::fit_second_level(&x, &y, &y, &cfg).unwrap();
        let mut exact = 0;
        for r in 0..50 {
            let mut input = x.row(r).to_vec();
            input.extend_from_slice(y.row(r));
            let (_, labels) = level2.predict_row(&input, 0.5).unwrap();
            exact += (labels.as_slice() == y.row(r)) as usize;
        }
        assert_eq!(exact, 50);
    }

    #[test]
    fn baselines_reject_empty_data() {
        let cfg = LogisticConfig::default();
        let x = Matrix::zeros(0, 2);
        let y = Matrix::zeros(0, 2);
        assert!(BinaryRelevance::fit(&x, &y, &cfg).is_err());
        assert!(StackModel::fit(&x, &y, &cfg).is_err());
        assert!(ChainModel::fit(&x, &y, &cfg, &[0, 1]).is_err());
    }
}
