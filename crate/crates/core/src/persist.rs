//! Saving and loading trained models.
//!
//! A model file is UTF-8 text:
//!
//! ```text
//! #mlc-model v1 kind=<msdn|br|cc|pcc|sta>
//! <TOML table: architecture and training settings>
//! ---
//! tensor <name> <rows> <cols>
//! <rows*cols values, space separated, row-major>
//! ...
//! ```
//!
//! Values use shortest round-trip formatting, so a loaded model predicts
//! bit-identically to the one that was saved. An optional min-max scaler is
//! stored as the tensors `scaler.min` and `scaler.max`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{BinaryRelevance, ChainModel, LogisticBase, Pcc, StackModel};
use crate::classifier::MultiLabelClassifier;
use crate::data::Scaler;
use crate::error::{Error, Result};
use crate::msdn::{MsdnConfig, MsdnModel};
use crate::numeric::Matrix;
use crate::training::Network;

pub const MODEL_MAGIC: &str = "#mlc-model v1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Msdn,
    Br,
    Cc,
    Pcc,
    Sta,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Msdn, ModelKind::Br, ModelKind::Cc, ModelKind::Pcc, ModelKind::Sta];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Msdn => "msdn",
            ModelKind::Br => "br",
            ModelKind::Cc => "cc",
            ModelKind::Pcc => "pcc",
            ModelKind::Sta => "sta",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::Validation(format!("unknown model `{s}` (expected one of msdn, br, cc, pcc, sta)"))
            })
    }
}

/// Any trained model.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Msdn(MsdnModel),
    Br(BinaryRelevance),
    Cc(ChainModel),
    Pcc(Pcc),
    Sta(StackModel),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Msdn(_) => ModelKind::Msdn,
            AnyModel::Br(_) => ModelKind::Br,
            AnyModel::Cc(_) => ModelKind::Cc,
            AnyModel::Pcc(_) => ModelKind::Pcc,
            AnyModel::Sta(_) => ModelKind::Sta,
        }
    }

    fn inner(&self) -> &dyn MultiLabelClassifier {
        match self {
            AnyModel::Msdn(m) => m,
            AnyModel::Br(m) => m,
            AnyModel::Cc(m) => m,
            AnyModel::Pcc(m) => m,
            AnyModel::Sta(m) => m,
        }
    }

    /// Number of trainable scalars.
    pub fn param_count(&self) -> usize {
        let logistic = |ms: &[LogisticBase]| ms.iter().map(|m| m.weights().len() + 1).sum::<usize>();
        match self {
            AnyModel::Msdn(m) => Network::param_count(m),
            AnyModel::Br(m) => logistic(&m.models),
            AnyModel::Cc(m) => logistic(m.models()),
            AnyModel::Pcc(m) => logistic(m.chain.models()),
            AnyModel::Sta(m) => logistic(&m.level1.models) + logistic(&m.level2.models),
        }
    }
}

impl MultiLabelClassifier for AnyModel {
    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn label_dim(&self) -> usize {
        self.inner().label_dim()
    }

    fn predict_row(&self, x: &[f64], threshold: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.inner().predict_row(x, threshold)
    }
}

/// A model plus the scaler its inputs must pass through.
#[derive(Clone, Debug)]
pub struct SavedModel {
    pub model: AnyModel,
    pub scaler: Option<Scaler>,
}

impl SavedModel {
    /// Scales `x` if a scaler is attached.
    pub fn prepare(&self, x: &Matrix) -> Result<Matrix> {
        match &self.scaler {
            Some(s) => s.transform(x),
            None => Ok(x.clone()),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct BaselineHeader {
    input_dim: usize,
    label_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    order: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d_max: Option<usize>,
}

struct Tensor {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    debug_assert_eq!(rows * cols, values.len());
    let _ = writeln!(out, "tensor {name} {rows} {cols}");
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v}");
    }
    out.push('\n');
}

fn push_logistic(out: &mut String, prefix: &str, models: &[LogisticBase]) {
    let cols = models.first().map_or(0, |m| m.weights().len());
    let w: Vec<f64> = models.iter().flat_map(|m| m.weights().iter().copied()).collect();
    let b: Vec<f64> = models.iter().map(|m| m.bias()).collect();
    push_tensor(out, &format!("{prefix}.weight"), models.len(), cols, &w);
    push_tensor(out, &format!("{prefix}.bias"), models.len(), 1, &b);
}

fn toml_err(e: impl std::fmt::Display) -> Error {
    Error::Validation(format!("model header: {e}"))
}

/// Serialises a model to the text format.
pub fn format_model(saved: &SavedModel) -> Result<String> {
    let model = &saved.model;
    let mut out = format!("{MODEL_MAGIC} kind={}\n", model.kind());
    let baseline = |order: Option<Vec<usize>>, d_max: Option<usize>| BaselineHeader {
        input_dim: model.input_dim(),
        label_dim: model.label_dim(),
        order,
        d_max,
    };
    let header = match model {
        AnyModel::Msdn(m) => toml::to_string(m.config()).map_err(toml_err)?,
        AnyModel::Br(_) | AnyModel::Sta(_) => toml::to_string(&baseline(None, None)).map_err(toml_err)?,
        AnyModel::Cc(c) => toml::to_string(&baseline(Some(c.order().to_vec()), None)).map_err(toml_err)?,
        AnyModel::Pcc(p) => {
            toml::to_string(&baseline(Some(p.chain.order().to_vec()), Some(p.d_max))).map_err(toml_err)?
        }
    };
    out.push_str(&header);
    if !header.ends_with('\n') {
        out.push('\n');
    }
    out.push_str("---\n");

    match model {
        AnyModel::Msdn(m) => push_tensor(&mut out, "params", 1, Network::param_count(m), &m.flat_params()),
        AnyModel::Br(m) => push_logistic(&mut out, "br", &m.models),
        AnyModel::Cc(c) => chain_tensors(&mut out, c),
        AnyModel::Pcc(p) => chain_tensors(&mut out, &p.chain),
        AnyModel::Sta(s) => {
            push_logistic(&mut out, "level1", &s.level1.models);
            push_logistic(&mut out, "level2", &s.level2.models);
        }
    }
    if let Some(s) = &saved.scaler {
        push_tensor(&mut out, "scaler.min", 1, s.min.len(), &s.min);
        push_tensor(&mut out, "scaler.max", 1, s.max.len(), &s.max);
    }
    Ok(out)
}

fn chain_tensors(out: &mut String, chain: &ChainModel) {
    for (j, link) in chain.models().iter().enumerate() {
        push_tensor(out, &format!("link{j}.weight"), 1, link.weights().len(), link.weights());
        push_tensor(out, &format!("link{j}.bias"), 1, 1, &[link.bias()]);
    }
}

fn perr(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

struct Tensors {
    items: Vec<Tensor>,
    path: String,
}

impl Tensors {
    fn take(&mut self, name: &str, rows: usize, cols: usize) -> Result<Vec<f64>> {
        let pos = self
            .items
            .iter()
            .position(|t| t.name == name)
            .ok_or_else(|| Error::Validation(format!("{}: missing tensor `{name}`", self.path)))?;
        let t = self.items.remove(pos);
        if (t.rows, t.cols) != (rows, cols) {
            return Err(Error::Validation(format!(
                "{}: tensor `{name}` is {}x{}, expected {rows}x{cols}",
                self.path, t.rows, t.cols
            )));
        }
        Ok(t.values)
    }

    fn logistic(&mut self, prefix: &str, count: usize, inputs: usize) -> Result<Vec<LogisticBase>> {
        let w = self.take(&format!("{prefix}.weight"), count, inputs)?;
        let b = self.take(&format!("{prefix}.bias"), count, 1)?;
        Ok((0..count)
            .map(|j| LogisticBase::from_parts(w[j * inputs..(j + 1) * inputs].to_vec(), b[j]))
            .collect())
    }
}

/// Parses the text format. `path` is used only in error messages.
pub fn parse_model(text: &str, path: &str) -> Result<SavedModel> {
    let lines: Vec<&str> = text.lines().collect();
    let first = lines.first().ok_or_else(|| perr(path, 1, "empty model file"))?;
    let kind = first
        .strip_prefix(MODEL_MAGIC)
        .and_then(|rest| rest.trim().strip_prefix("kind="))
        .ok_or_else(|| perr(path, 1, format!("expected `{MODEL_MAGIC} kind=<model>`")))?;
    let kind: ModelKind = kind.trim().parse()?;
    let sep = lines
        .iter()
        .position(|l| *l == "---")
        .ok_or_else(|| perr(path, lines.len(), "missing `---` after the header"))?;
    let header = lines[1..sep].join("\n");

    let mut items = Vec::new();
    let mut i = sep + 1;
    while i < lines.len() {
        let lineno = i + 1;
        if lines[i].is_empty() {
            i += 1;
            continue;
        }
        let parts: Vec<&str> = lines[i].split_whitespace().collect();
        let (name, rows, cols) = match parts.as_slice() {
            ["tensor", name, r, c] => (
                name.to_string(),
                r.parse::<usize>().map_err(|_| perr(path, lineno, "bad tensor row count"))?,
                c.parse::<usize>().map_err(|_| perr(path, lineno, "bad tensor column count"))?,
            ),
            _ => return Err(perr(path, lineno, "expected `tensor <name> <rows> <cols>`")),
        };
        let body = lines.get(i + 1).copied().unwrap_or("");
        let values: Vec<f64> = body
            .split_whitespace()
            .map(|v| v.parse::<f64>().map_err(|_| perr(path, lineno + 1, format!("cannot parse `{v}`"))))
            .collect::<Result<_>>()?;
        if values.len() != rows * cols {
            return Err(perr(
                path,
                lineno + 1,
                format!("tensor `{name}` declares {} values, found {}", rows * cols, values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(perr(path, lineno + 1, format!("tensor `{name}` holds a non-finite value")));
        }
        items.push(Tensor { name, rows, cols, values });
        i += 2;
    }
    let mut tensors = Tensors {
        items,
        path: path.to_string(),
    };

    let model = match kind {
        ModelKind::Msdn => {
            let config: MsdnConfig = toml::from_str(&header).map_err(toml_err)?;
            let mut model = MsdnModel::new(config)?;
            let n = Network::param_count(&model);
            let flat = tensors.take("params", 1, n)?;
            model.set_flat_params(&flat)?;
            AnyModel::Msdn(model)
        }
        _ => {
            let h: BaselineHeader = toml::from_str(&header).map_err(toml_err)?;
            let (m, d) = (h.input_dim, h.label_dim);
            match kind {
                ModelKind::Br => AnyModel::Br(BinaryRelevance::from_models(tensors.logistic("br", d, m)?)?),
                ModelKind::Sta => {
                    let l1 = BinaryRelevance::from_models(tensors.logistic("level1", d, m)?)?;
                    let l2 = BinaryRelevance::from_models(tensors.logistic("level2", d, m + d)?)?;
                    AnyModel::Sta(StackModel::from_levels(l1, l2)?)
                }
                _ => {
                    let order = h
                        .order
                        .clone()
                        .ok_or_else(|| Error::Validation(format!("{path}: chain model without `order`")))?;
                    let mut links = Vec::with_capacity(order.len());
                    for j in 0..order.len() {
                        let w = tensors.take(&format!("link{j}.weight"), 1, m + j)?;
                        let b = tensors.take(&format!("link{j}.bias"), 1, 1)?;
                        links.push(LogisticBase::from_parts(w, b[0]));
                    }
                    let chain = ChainModel::from_parts(m, order, links)?;
                    if kind == ModelKind::Cc {
                        AnyModel::Cc(chain)
                    } else {
                        let d_max = h
                            .d_max
                            .ok_or_else(|| Error::Validation(format!("{path}: pcc model without `d_max`")))?;
                        AnyModel::Pcc(Pcc::new(chain, d_max)?)
                    }
                }
            }
        }
    };

    let m = model.input_dim();
    let scaler = if tensors.items.iter().any(|t| t.name == "scaler.min") {
        Some(Scaler {
            min: tensors.take("scaler.min", 1, m)?,
            max: tensors.take("scaler.max", 1, m)?,
        })
    } else {
        None
    };
    if let Some(t) = tensors.items.first() {
        return Err(Error::Validation(format!("{path}: unexpected tensor `{}`", t.name)));
    }
    Ok(SavedModel { model, scaler })
}

pub fn save_model(saved: &SavedModel, path: &Path) -> Result<()> {
    fs::write(path, format_model(saved)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model(&text, &path.display().to_string())
}
