//! Benchmark runner: repeated train/test splits, grid search, metrics and reports.
//!
//! Every `(dataset, model, repeat)` cell is independent. A cell scales features
//! with statistics from its training rows, picks hyperparameters by the
//! selection metric on an inner validation split of those rows, retrains on the
//! whole training split and scores the test rows.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BinaryRelevance, ChainModel, LogisticConfig, Pcc, StackModel};
use crate::classifier::{MultiLabelClassifier, DEFAULT_THRESHOLD};
use crate::data::{self, Dataset, Format, LabelSpec, Scaler, SplitPlan};
use crate::error::{Error, Result};
use crate::eval::{self, aggregate, BenchmarkReport, Metric, MetricRecord};
use crate::msdn::{self, MsdnConfig, MsdnModel};
use crate::numeric::{derive_seed, Matrix, Rng};
use crate::persist::{save_model, AnyModel, ModelKind, SavedModel};
use crate::training::TrainReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    #[default]
    Canonical,
    Arff,
}

/// Where a dataset comes from: a file, or the synthetic generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSource {
    pub name: Option<String>,
    pub path: Option<PathBuf>,
    pub format: FileFormat,
    /// ARFF: number of trailing label attributes.
    pub labels: Option<usize>,
    /// ARFF: Mulan XML file naming the label attributes.
    pub sidecar: Option<PathBuf>,
    /// ARFF: read the label count from the `-C` option of the relation name.
    pub meka: bool,
    pub synth: Option<SynthSpec>,
}

impl DatasetSource {
    pub fn file(path: impl Into<PathBuf>) -> Self {
        DatasetSource {
            path: Some(path.into()),
            ..Default::default()
        }
    }

    pub fn synth(spec: SynthSpec) -> Self {
        DatasetSource {
            synth: Some(spec),
            ..Default::default()
        }
    }

    pub fn format(&self) -> Result<Format> {
        Ok(match self.format {
            FileFormat::Canonical => Format::Canonical,
            FileFormat::Arff => Format::Arff(match (self.labels, &self.sidecar, self.meka) {
                (Some(n), None, false) => LabelSpec::Trailing(n),
                (None, Some(xml), false) => LabelSpec::Sidecar(xml.clone()),
                (None, None, true) => LabelSpec::Meka,
                _ => {
                    return Err(Error::Validation(
                        "an ARFF dataset needs exactly one of `labels`, `sidecar` or `meka`".into(),
                    ))
                }
            }),
        })
    }

    /// Relative paths are resolved against `base`.
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        let mut dataset = match (&self.path, &self.synth) {
            (Some(path), None) => {
                let full = if path.is_relative() { base.join(path) } else { path.clone() };
                data::load_dataset(&full, &self.format()?)?.dataset
            }
            (None, Some(s)) => data::synth_xor(s.n, s.m, s.d, s.noise, s.seed)?,
            _ => {
                return Err(Error::Validation(
                    "a dataset entry needs exactly one of `path` or `synth`".into(),
                ))
            }
        };
        if let Some(name) = &self.name {
            dataset.name = name.clone();
        }
        Ok(dataset)
    }
}

/// MSDN search space and fixed architecture.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MsdnGrid {
    pub learning_rate: Vec<f64>,
    pub dropout: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub hidden_dim: usize,
    pub kernel_count: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
}

impl Default for MsdnGrid {
    fn default() -> Self {
        let base = MsdnConfig::default();
        MsdnGrid {
            learning_rate: msdn::LEARNING_RATE_GRID.to_vec(),
            dropout: msdn::DROPOUT_GRID.to_vec(),
            weight_decay: msdn::WEIGHT_DECAY_GRID.to_vec(),
            hidden_dim: base.hidden_dim,
            kernel_count: base.kernel_count,
            batch_size: base.batch_size,
            max_epochs: base.max_epochs,
            patience: base.patience,
            validation_fraction: base.validation_fraction,
        }
    }
}

/// Search space of the logistic base learner shared by BR, CC, PCC and STA.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineGrid {
    pub learning_rate: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for BaselineGrid {
    fn default() -> Self {
        BaselineGrid {
            learning_rate: vec![0.001, 0.01, 0.05],
            weight_decay: vec![0.0, 0.0001],
            epochs: 200,
            batch_size: 128,
        }
    }
}

/// One point of a search space.
#[derive(Clone, Debug, PartialEq)]
pub enum Hyper {
    Msdn(MsdnConfig),
    Baseline(LogisticConfig),
}

impl Hyper {
    /// `key=value` pairs joined by `;`.
    pub fn describe(&self) -> String {
        match self {
            Hyper::Msdn(c) => format!(
                "lr={};dropout={};wd={};h={};K={}",
                c.learning_rate, c.dropout, c.weight_decay, c.hidden_dim, c.kernel_count
            ),
            Hyper::Baseline(c) => format!("lr={};wd={};epochs={}", c.learning_rate, c.weight_decay, c.epochs),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub repeats: usize,
    pub train_fraction: f64,
    /// Share of the training rows held out to score grid points.
    pub selection_fraction: f64,
    pub selection_metric: Metric,
    /// Model the t-tests compare every other model against.
    pub reference: ModelKind,
    pub alpha: f64,
    pub msdn: MsdnGrid,
    pub baseline: BaselineGrid,
    pub pcc_d_max: usize,
    /// Wall-clock cap for a single MSDN training run.
    pub budget_seconds: Option<f64>,
    pub jobs: usize,
    pub output_dir: PathBuf,
    pub save_models: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            datasets: Vec::new(),
            models: ModelKind::ALL.to_vec(),
            seed: 0,
            repeats: data::DEFAULT_REPEATS,
            train_fraction: data::DEFAULT_TRAIN_FRACTION,
            selection_fraction: 0.2,
            selection_metric: Metric::Ema,
            reference: ModelKind::Msdn,
            alpha: eval::DEFAULT_ALPHA,
            msdn: MsdnGrid::default(),
            baseline: BaselineGrid::default(),
            pcc_d_max: crate::baselines::DEFAULT_PCC_D_MAX,
            budget_seconds: None,
            jobs: 1,
            output_dir: PathBuf::from("results"),
            save_models: true,
        }
    }
}

fn check_values(name: &str, values: &[f64], ok: impl Fn(f64) -> bool, range: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Validation(format!("{name} grid is empty")));
    }
    if let Some(v) = values.iter().find(|v| !ok(**v)) {
        return Err(Error::Validation(format!("{name} value {v} outside {range}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(format!("experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Validation(format!("experiment config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Validation("no models selected".into()));
        }
        if self.datasets.is_empty() {
            return Err(Error::Validation("no datasets configured".into()));
        }
        for (i, m) in self.models.iter().enumerate() {
            if self.models[..i].contains(m) {
                return Err(Error::Validation(format!("model {m} listed twice")));
            }
        }
        for ds in &self.datasets {
            if ds.path.is_some() == ds.synth.is_some() {
                return Err(Error::Validation(
                    "a dataset entry needs exactly one of `path` or `synth`".into(),
                ));
            }
            if ds.path.is_some() {
                ds.format()?;
            }
        }
        if self.repeats == 0 {
            return Err(Error::Validation("repeats must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Validation(format!("train_fraction {} outside (0, 1)", self.train_fraction)));
        }
        if !(self.selection_fraction > 0.0 && self.selection_fraction < 1.0) {
            return Err(Error::Validation(format!(
                "selection_fraction {} outside (0, 1)",
                self.selection_fraction
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.jobs == 0 {
            return Err(Error::Validation("jobs must be at least 1".into()));
        }
        if self.pcc_d_max == 0 {
            return Err(Error::Validation("pcc_d_max must be at least 1".into()));
        }
        if let Some(b) = self.budget_seconds {
            if !(b > 0.0) {
                return Err(Error::Validation(format!("budget_seconds {b} must be positive")));
            }
        }
        let g = &self.msdn;
        check_values("msdn learning_rate", &g.learning_rate, |v| v > 0.0 && v <= 1.0, "(0, 1]")?;
        check_values("msdn dropout", &g.dropout, |v| (0.0..1.0).contains(&v), "[0, 1)")?;
        check_values("msdn weight_decay", &g.weight_decay, |v| (0.0..=1.0).contains(&v), "[0, 1]")?;
        if g.kernel_count == 0 || g.kernel_count > g.hidden_dim {
            return Err(Error::Validation(format!(
                "msdn kernel_count {} must lie in 1..={} (hidden_dim)",
                g.kernel_count, g.hidden_dim
            )));
        }
        if g.batch_size == 0 {
            return Err(Error::Validation("msdn batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&g.validation_fraction) {
            return Err(Error::Validation("msdn validation_fraction outside [0, 1)".into()));
        }
        let b = &self.baseline;
        check_values("baseline learning_rate", &b.learning_rate, |v| v > 0.0 && v <= 1.0, "(0, 1]")?;
        check_values("baseline weight_decay", &b.weight_decay, |v| (0.0..=1.0).contains(&v), "[0, 1]")?;
        if b.batch_size == 0 {
            return Err(Error::Validation("baseline batch_size must be at least 1".into()));
        }
        Ok(())
    }

    /// All grid points for `kind` on an `m`-feature, `d`-label dataset, in a
    /// fixed order (learning rate outermost).
    pub fn grid(&self, kind: ModelKind, m: usize, d: usize, seed: u64) -> Vec<Hyper> {
        let mut out = Vec::new();
        match kind {
            ModelKind::Msdn => {
                let g = &self.msdn;
                for &lr in &g.learning_rate {
                    for &dropout in &g.dropout {
                        for &wd in &g.weight_decay {
                            out.push(Hyper::Msdn(MsdnConfig {
                                input_dim: m,
                                label_dim: d,
                                hidden_dim: g.hidden_dim,
                                kernel_count: g.kernel_count,
                                learning_rate: lr,
                                dropout,
                                weight_decay: wd,
                                batch_size: g.batch_size,
                                max_epochs: g.max_epochs,
                                patience: g.patience,
                                validation_fraction: g.validation_fraction,
                                seed,
                                budget_seconds: self.budget_seconds,
                                ..MsdnConfig::default()
                            }));
                        }
                    }
                }
            }
            _ => {
                let g = &self.baseline;
                for &lr in &g.learning_rate {
                    for &wd in &g.weight_decay {
                        out.push(Hyper::Baseline(LogisticConfig {
                            learning_rate: lr,
                            weight_decay: wd,
                            epochs: g.epochs,
                            batch_size: g.batch_size,
                            seed,
                        }));
                    }
                }
            }
        }
        out
    }
}

/// Trains one model. Chains use the label columns in their given order.
pub fn train_model(
    kind: ModelKind,
    x: &Matrix,
    y: &Matrix,
    hyper: &Hyper,
    pcc_d_max: usize,
) -> Result<(AnyModel, Option<TrainReport>)> {
    let order: Vec<usize> = (0..y.cols()).collect();
    let logistic = || match hyper {
        Hyper::Baseline(c) => Ok(c),
        Hyper::Msdn(_) => Err(Error::contract(format!("{kind} needs baseline hyperparameters"))),
    };
    Ok(match kind {
        ModelKind::Msdn => {
            let Hyper::Msdn(cfg) = hyper else {
                return Err(Error::contract("msdn needs msdn hyperparameters"));
            };
            let (model, report) = MsdnModel::fit(x, y, cfg)?;
            (AnyModel::Msdn(model), Some(report))
        }
        ModelKind::Br => (AnyModel::Br(BinaryRelevance::fit(x, y, logistic()?)?), None),
        ModelKind::Cc => (AnyModel::Cc(ChainModel::fit(x, y, logistic()?, &order)?), None),
        ModelKind::Pcc => (AnyModel::Pcc(Pcc::fit(x, y, logistic()?, &order, pcc_d_max)?), None),
        ModelKind::Sta => (AnyModel::Sta(StackModel::fit(x, y, logistic()?)?), None),
    })
}

fn score(metric: Metric, model: &AnyModel, x: &Matrix, y: &Matrix) -> Result<f64> {
    let pred = model.predict(x, DEFAULT_THRESHOLD)?;
    match metric {
        Metric::Ema => eval::ema(&pred.labels, y),
        Metric::MicroF1 => eval::micro_f1(&pred.labels, y),
    }
}

/// A cell that could not be completed.
#[derive(Clone, Debug, PartialEq)]
pub struct CellFailure {
    pub dataset: String,
    pub model: String,
    pub repeat: Option<usize>,
    pub error: String,
}

#[derive(Debug)]
struct CellResult {
    record: MetricRecord,
    model: AnyModel,
    scaler: Scaler,
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub records: Vec<MetricRecord>,
    pub failures: Vec<CellFailure>,
    /// `None` when no (dataset, model) pair completed every repeat.
    pub report: Option<BenchmarkReport>,
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
}

impl Runner<'_> {
    fn run_cell(&self, dataset: &Dataset, plan: &SplitPlan, kind: ModelKind) -> Result<CellResult> {
        let cfg = self.config;
        let started = Instant::now();
        let (m, d) = (dataset.feature_dim(), dataset.label_dim());
        if kind == ModelKind::Pcc && d > cfg.pcc_d_max {
            return Err(Error::TooManyLabels { d, d_max: cfg.pcc_d_max });
        }
        let (x_train, y_train) = dataset.subset(&plan.train);
        let (x_test, y_test) = dataset.subset(&plan.test);
        let scaler = Scaler::fit(&x_train)?;
        let x_train = scaler.transform(&x_train)?;
        let x_test = scaler.transform(&x_test)?;

        let cell_seed = derive_seed(derive_seed(cfg.seed, plan.repeat as u64), kind as u64 + 1);
        let grid = cfg.grid(kind, m, d, cell_seed);
        let chosen = if grid.len() == 1 {
            grid[0].clone()
        } else {
            let n = x_train.rows();
            let n_val = ((cfg.selection_fraction * n as f64).round() as usize).clamp(1, n - 1);
            let perm = Rng::new(derive_seed(cell_seed, 7)).shuffle(n);
            let (val_rows, fit_rows) = perm.split_at(n_val);
            let (x_fit, y_fit) = (x_train.select_rows(fit_rows), y_train.select_rows(fit_rows));
            let (x_val, y_val) = (x_train.select_rows(val_rows), y_train.select_rows(val_rows));
            let scores: Vec<Result<f64>> = grid
                .par_iter()
                .map(|h| {
                    let (model, _) = train_model(kind, &x_fit, &y_fit, h, cfg.pcc_d_max)?;
                    score(cfg.selection_metric, &model, &x_val, &y_val)
                })
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for (i, s) in scores.into_iter().enumerate() {
                let s = s?;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            let (i, s) = best.expect("grid is non-empty");
            log::debug!(
                "{} {kind} repeat {}: selected {} (validation {} {s:.4})",
                dataset.name,
                plan.repeat,
                grid[i].describe(),
                cfg.selection_metric.name()
            );
            grid[i].clone()
        };

        let (model, report) = train_model(kind, &x_train, &y_train, &chosen, cfg.pcc_d_max)?;
        let pred = model.predict(&x_test, DEFAULT_THRESHOLD)?;
        let record = MetricRecord {
            dataset: dataset.name.clone(),
            model: kind.name().to_string(),
            repeat: plan.repeat,
            ema: eval::ema(&pred.labels, &y_test)?,
            micro_f1: eval::micro_f1(&pred.labels, &y_test)?,
            wall_time_secs: started.elapsed().as_secs_f64(),
            param_count: model.param_count(),
            selected: chosen.describe(),
        };
        let epochs = report.map(|r| format!(", {} epochs", r.epochs_run)).unwrap_or_default();
        log::info!(
            "{} {kind} repeat {}: ema {:.4} micro_f1 {:.4} ({:.1}s{epochs})",
            record.dataset,
            record.repeat,
            record.ema,
            record.micro_f1,
            record.wall_time_secs
        );
        Ok(CellResult { record, model, scaler })
    }
}

/// Runs every cell of the experiment and writes its outputs under
/// `config.output_dir` when `write` is set.
pub fn run_benchmark(config: &ExperimentConfig, base: &Path, write: bool) -> Result<BenchmarkOutcome> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::contract(format!("thread pool: {e}")))?;

    let mut failures = Vec::new();
    let mut loaded = Vec::new();
    for source in &config.datasets {
        match source.load(base) {
            Ok(ds) => loaded.push(ds),
            Err(e) => {
                let name = source
                    .name
                    .clone()
                    .or_else(|| source.path.as_ref().map(|p| p.display().to_string()))
                    .unwrap_or_else(|| "dataset".into());
                log::error!("{name}: {e}");
                for kind in &config.models {
                    failures.push(CellFailure {
                        dataset: name.clone(),
                        model: kind.name().into(),
                        repeat: None,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    for (i, ds) in loaded.iter().enumerate() {
        if loaded[..i].iter().any(|o| o.name == ds.name) {
            return Err(Error::Validation(format!("dataset name {} used twice", ds.name)));
        }
    }

    let mut tasks = Vec::new();
    for ds in &loaded {
        let plans = data::split(ds.len(), config.seed, config.repeats, config.train_fraction)?;
        for kind in &config.models {
            for plan in &plans {
                tasks.push((ds, plan.clone(), *kind));
            }
        }
    }
    let runner = Runner { config };
    let results: Vec<Result<CellResult>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(ds, plan, kind)| runner.run_cell(ds, plan, *kind))
            .collect()
    });

    let models_dir = config.output_dir.join("models");
    if write {
        fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
    }
    let mut records = Vec::new();
    for ((ds, plan, kind), result) in tasks.iter().zip(results) {
        match result {
            Ok(cell) => {
                if write && config.save_models {
                    let path = models_dir.join(format!("{}_{}_r{}.model", ds.name, kind, plan.repeat));
                    save_model(
                        &SavedModel {
                            model: cell.model,
                            scaler: Some(cell.scaler),
                        },
                        &path,
                    )?;
                }
                records.push(cell.record);
            }
            Err(e) => {
                log::error!("{} {kind} repeat {}: {e}", ds.name, plan.repeat);
                failures.push(CellFailure {
                    dataset: ds.name.clone(),
                    model: kind.name().into(),
                    repeat: Some(plan.repeat),
                    error: e.to_string(),
                });
            }
        }
    }

    // pairs with a failed repeat are left out of the summary
    let complete: Vec<MetricRecord> = records
        .iter()
        .filter(|r| {
            !failures
                .iter()
                .any(|f| f.dataset == r.dataset && f.model == r.model)
        })
        .cloned()
        .collect();
    let report = if complete.is_empty() {
        None
    } else {
        Some(aggregate(&complete, config.reference.name(), config.alpha)?)
    };
    let outcome = BenchmarkOutcome {
        records,
        failures,
        report,
    };
    if write {
        write_outputs(&outcome, &config.output_dir)?;
    }
    Ok(outcome)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `metrics.csv`, `summary.csv`, `ttests.csv` and `report.md`.
pub fn write_outputs(outcome: &BenchmarkOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("metrics.csv"), &eval::metrics_csv(&outcome.records))?;
    let mut md = String::new();
    match &outcome.report {
        Some(report) => {
            write_file(&dir.join("summary.csv"), &report.summary_csv())?;
            write_file(&dir.join("ttests.csv"), &report.ttests_csv())?;
            md.push_str(&report.markdown());
        }
        None => {
            write_file(&dir.join("ttests.csv"), "dataset,metric,reference,competitor,mean_diff,t,p_value,degenerate,verdict\n")?;
            md.push_str("# Benchmark report\n\nNo model completed every repeat.\n");
        }
    }
    if !outcome.failures.is_empty() {
        md.push_str("\n## Failures\n\n");
        for f in &outcome.failures {
            let repeat = f.repeat.map(|r| format!(" repeat {r}")).unwrap_or_default();
            md.push_str(&format!("- {} / {}{repeat}: {}\n", f.dataset, f.model, f.error));
        }
    }
    write_file(&dir.join("report.md"), &md)
}
