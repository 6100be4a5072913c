//! Datasets, file formats, train/test splitting and feature scaling.
//!
//! # Canonical format
//!
//! UTF-8 text, `\n` line endings:
//!
//! ```text
//! #mlc v1 N=<rows> m=<features> d=<labels>
//! <feature name>,<feature name>,...      (m names)
//! <label name>,<label name>,...          (d names)
//! <x_1>,...,<x_m>,<y_1>,...,<y_d>        (N rows)
//! ```
//!
//! Features are written with Rust's shortest round-trip `f64` formatting, so a
//! value reads back bit-identical; labels are `0` or `1`. Names may not contain
//! commas or line breaks. The dataset name is the file stem.
//!
//! # ARFF
//!
//! Dense ARFF with numeric attributes and `{0,1}` label attributes. The label
//! attributes are chosen by, in order of precedence: an explicit count (the
//! trailing `d` attributes), a Mulan-style XML sidecar listing
//! `<label name="...">` entries, or a MEKA `-C <d>` option in the relation name
//! (positive: leading attributes; negative: trailing).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::{derive_seed, Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub x: Matrix,
    pub y: Matrix,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub domain: Option<String>,
}

impl Dataset {
    /// Validates shapes, label values and feature finiteness. Default names
    /// are generated when the name lists are empty.
    pub fn new(name: impl Into<String>, x: Matrix, y: Matrix) -> Result<Self> {
        let feature_names = (1..=x.cols()).map(|i| format!("x{i}")).collect();
        let label_names = (1..=y.cols()).map(|i| format!("y{i}")).collect();
        Dataset::with_names(name, x, y, feature_names, label_names)
    }

    pub fn with_names(
        name: impl Into<String>,
        x: Matrix,
        y: Matrix,
        feature_names: Vec<String>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let name = name.into();
        if x.rows() == 0 || x.cols() == 0 || y.cols() == 0 {
            return Err(Error::Validation(format!(
                "dataset {name} needs at least one row, feature and label (got {}x{}, {} labels)",
                x.rows(),
                x.cols(),
                y.cols()
            )));
        }
        if x.rows() != y.rows() {
            return Err(Error::Validation(format!(
                "dataset {name}: {} feature rows but {} label rows",
                x.rows(),
                y.rows()
            )));
        }
        if feature_names.len() != x.cols() || label_names.len() != y.cols() {
            return Err(Error::Validation(format!(
                "dataset {name}: name lists do not match the matrix widths"
            )));
        }
        for r in 0..x.rows() {
            if let Some(c) = x.row(r).iter().position(|v| !v.is_finite()) {
                return Err(Error::Validation(format!(
                    "dataset {name}: feature at row {r}, column {c} is not finite"
                )));
            }
            if let Some(c) = y.row(r).iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Validation(format!(
                    "dataset {name}: label at row {r}, column {c} is {}; labels must be 0 or 1",
                    y.get(r, c)
                )));
            }
        }
        let domain = registry_entry(&name).map(|m| m.domain.to_string());
        Ok(Dataset {
            name,
            x,
            y,
            feature_names,
            label_names,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }

    pub fn label_dim(&self) -> usize {
        self.y.cols()
    }

    /// Rows `indices` of features and labels (unchecked names/metadata copy).
    pub fn subset(&self, indices: &[usize]) -> (Matrix, Matrix) {
        (self.x.select_rows(indices), self.y.select_rows(indices))
    }
}

/// Published characteristics of the standard benchmark datasets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetMeta {
    pub name: &'static str,
    pub instances: usize,
    pub features: usize,
    pub labels: usize,
    pub domain: &'static str,
}

pub const REGISTRY: [DatasetMeta; 5] = [
    DatasetMeta { name: "Scene", instances: 2408, features: 294, labels: 6, domain: "image" },
    DatasetMeta { name: "Yeast", instances: 2417, features: 103, labels: 14, domain: "biology" },
    DatasetMeta { name: "Business", instances: 11214, features: 21950, labels: 30, domain: "text" },
    DatasetMeta { name: "Science", instances: 6428, features: 37230, labels: 40, domain: "text" },
    DatasetMeta { name: "TMC2007_500", instances: 28596, features: 500, labels: 22, domain: "text" },
];

/// Case-insensitive lookup; `tmc2007-500` and `TMC2007_500` are the same entry.
pub fn registry_entry(name: &str) -> Option<&'static DatasetMeta> {
    let norm = |s: &str| s.to_ascii_lowercase().replace('-', "_");
    let key = norm(name);
    REGISTRY.iter().find(|m| norm(m.name) == key)
}

/// Differences between a dataset's shape and its registry entry, if any.
pub fn registry_warnings(dataset: &Dataset) -> Vec<String> {
    let Some(meta) = registry_entry(&dataset.name) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for (what, got, want) in [
        ("instances", dataset.len(), meta.instances),
        ("features", dataset.feature_dim(), meta.features),
        ("labels", dataset.label_dim(), meta.labels),
    ] {
        if got != want {
            out.push(format!(
                "{}: {got} {what}, the reference {} has {want}",
                dataset.name, meta.name
            ));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum Format {
    Canonical,
    Arff(LabelSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub enum LabelSpec {
    /// The last `n` attributes are labels.
    Trailing(usize),
    /// Label attribute names read from a Mulan XML file.
    Sidecar(std::path::PathBuf),
    /// Use the `-C` option embedded in the relation name.
    Meka,
}

#[derive(Clone, Debug)]
pub struct Loaded {
    pub dataset: Dataset,
    pub warnings: Vec<String>,
}

pub fn load_dataset(path: &Path, format: &Format) -> Result<Loaded> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let dataset = match format {
        Format::Canonical => parse_canonical(&text, &stem, &path.display().to_string())?,
        Format::Arff(spec) => {
            let labels = match spec {
                LabelSpec::Sidecar(xml) => {
                    let xml_text = fs::read_to_string(xml).map_err(|e| Error::io(xml, e))?;
                    ArffLabels::Named(parse_mulan_labels(&xml_text))
                }
                LabelSpec::Trailing(n) => ArffLabels::Trailing(*n),
                LabelSpec::Meka => ArffLabels::Meka,
            };
            parse_arff(&text, &stem, &path.display().to_string(), &labels)?
        }
    };
    let warnings = registry_warnings(&dataset);
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(Loaded { dataset, warnings })
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn header_field(token: Option<&str>, key: &str, path: &str) -> Result<usize> {
    token
        .and_then(|t| t.strip_prefix(key))
        .and_then(|t| t.strip_prefix('='))
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(path, 1, format!("header must declare {key}=<int>")))
}

pub fn parse_canonical(text: &str, name: &str, path: &str) -> Result<Dataset> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let mut tokens = header.split_whitespace();
    if tokens.next() != Some("#mlc") || tokens.next() != Some("v1") {
        return Err(parse_err(path, 1, "expected header `#mlc v1 N=<int> m=<int> d=<int>`"));
    }
    let n = header_field(tokens.next(), "N", path)?;
    let m = header_field(tokens.next(), "m", path)?;
    let d = header_field(tokens.next(), "d", path)?;

    let split_names = |line: Option<&str>, count: usize, lineno: usize, what: &str| -> Result<Vec<String>> {
        let line = line.ok_or_else(|| parse_err(path, lineno, format!("missing {what} names")))?;
        let names: Vec<String> = line.split(',').map(str::to_string).collect();
        if names.len() != count {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {count} {what} names, found {}", names.len()),
            ));
        }
        Ok(names)
    };
    let feature_names = split_names(lines.next(), m, 2, "feature")?;
    let label_names = split_names(lines.next(), d, 3, "label")?;

    let mut x = Matrix::zeros(n, m);
    let mut y = Matrix::zeros(n, d);
    let mut rows = 0;
    for (i, line) in lines.enumerate() {
        let lineno = i + 4;
        if line.is_empty() {
            continue;
        }
        if rows == n {
            return Err(parse_err(path, lineno, format!("more than the declared {n} rows")));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != m + d {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} fields, found {}", m + d, fields.len()),
            ));
        }
        for (c, f) in fields[..m].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("feature {c}: cannot parse `{f}`")))?;
            x.set(rows, c, v);
        }
        for (c, f) in fields[m..].iter().enumerate() {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("label {c}: cannot parse `{f}`")))?;
            y.set(rows, c, v);
        }
        rows += 1;
    }
    if rows != n {
        return Err(parse_err(path, rows + 4, format!("declared {n} rows, found {rows}")));
    }
    Dataset::with_names(name, x, y, feature_names, label_names)
}

pub fn format_canonical(dataset: &Dataset) -> Result<String> {
    for name in dataset.feature_names.iter().chain(&dataset.label_names) {
        if name.contains([',', '\n', '\r']) {
            return Err(Error::Validation(format!(
                "name `{name}` cannot be written: commas and line breaks are reserved"
            )));
        }
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        "#mlc v1 N={} m={} d={}",
        dataset.len(),
        dataset.feature_dim(),
        dataset.label_dim()
    );
    out.push_str(&dataset.feature_names.join(","));
    out.push('\n');
    out.push_str(&dataset.label_names.join(","));
    out.push('\n');
    for r in 0..dataset.len() {
        let mut first = true;
        for v in dataset.x.row(r) {
            if !first {
                out.push(',');
            }
            first = false;
            let _ = write!(out, "{v}");
        }
        for &v in dataset.y.row(r) {
            out.push_str(if v == 1.0 { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_canonical(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, format_canonical(dataset)?).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArffLabels {
    Trailing(usize),
    Named(Vec<String>),
    Meka,
}

/// Label names from `<label name="...">` elements of a Mulan XML file.
pub fn parse_mulan_labels(xml: &str) -> Vec<String> {
    let mut names = Vec::new();
    let mut rest = xml;
    while let Some(pos) = rest.find("<label") {
        rest = &rest[pos + "<label".len()..];
        if !rest.starts_with(|c: char| c.is_whitespace()) {
            continue;
        }
        let tag = &rest[..rest.find('>').unwrap_or(rest.len())];
        let Some(attr) = tag.find("name=") else { continue };
        let after = &tag[attr + "name=".len()..];
        let Some(quote) = after.chars().next().filter(|c| *c == '"' || *c == '\'') else {
            continue;
        };
        if let Some(end) = after[1..].find(quote) {
            names.push(unescape_xml(&after[1..1 + end]));
        }
    }
    names
}

fn unescape_xml(s: &str) -> String {
    s.replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&")
}

fn unquote(s: &str) -> String {
    let s = s.trim();
    for q in ['\'', '"'] {
        if s.len() >= 2 && s.starts_with(q) && s.ends_with(q) {
            return s[1..s.len() - 1].replace("\\'", "'").replace("\\\"", "\"");
        }
    }
    s.to_string()
}

/// Splits `@attribute <name> <type>` where the name may be quoted.
fn split_attribute(rest: &str) -> Option<(String, String)> {
    let rest = rest.trim();
    let first = rest.chars().next()?;
    if first == '\'' || first == '"' {
        let mut escaped = false;
        for (i, c) in rest.char_indices().skip(1) {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == first {
                return Some((unquote(&rest[..=i]), rest[i + 1..].trim().to_string()));
            }
        }
        None
    } else {
        let mut it = rest.splitn(2, char::is_whitespace);
        Some((it.next()?.to_string(), it.next()?.trim().to_string()))
    }
}

fn meka_label_count(relation: &str) -> Option<i64> {
    let mut tokens = relation.split(|c: char| c.is_whitespace() || c == '\'' || c == '"');
    while let Some(t) = tokens.next() {
        if t == "-C" {
            return tokens.find(|t| !t.is_empty())?.parse().ok();
        }
    }
    None
}

pub fn parse_arff(text: &str, name: &str, path: &str, labels: &ArffLabels) -> Result<Dataset> {
    let mut relation = String::new();
    let mut attributes: Vec<(String, String)> = Vec::new();
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut in_data = false;

    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        if !in_data {
            let lower = line.to_ascii_lowercase();
            if lower.starts_with("@relation") {
                relation = line["@relation".len()..].trim().to_string();
            } else if lower.starts_with("@attribute") {
                let (attr, kind) = split_attribute(&line["@attribute".len()..])
                    .ok_or_else(|| parse_err(path, lineno, "malformed @attribute"))?;
                attributes.push((attr, kind));
            } else if lower.starts_with("@data") {
                in_data = true;
            } else {
                return Err(parse_err(path, lineno, format!("unexpected header line `{line}`")));
            }
            continue;
        }
        if line.starts_with('{') {
            return Err(parse_err(path, lineno, "sparse ARFF rows are not supported"));
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != attributes.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} values, found {}", attributes.len(), fields.len()),
            ));
        }
        let mut values = Vec::with_capacity(fields.len());
        for (c, f) in fields.iter().enumerate() {
            let f = unquote(f);
            if f == "?" {
                return Err(parse_err(path, lineno, format!("missing value in attribute {c}")));
            }
            values.push(
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, lineno, format!("attribute {c}: cannot parse `{f}`")))?,
            );
        }
        rows.push((lineno, values));
    }
    if !in_data {
        return Err(parse_err(path, text.lines().count(), "no @data section"));
    }

    let total = attributes.len();
    let label_idx: Vec<usize> = match labels {
        ArffLabels::Trailing(d) => {
            if *d == 0 || *d >= total {
                return Err(parse_err(path, 1, format!("cannot take {d} labels from {total} attributes")));
            }
            (total - d..total).collect()
        }
        ArffLabels::Named(names) => {
            let mut idx = Vec::with_capacity(names.len());
            for n in names {
                let pos = attributes
                    .iter()
                    .position(|(a, _)| a == n)
                    .ok_or_else(|| parse_err(path, 1, format!("label attribute `{n}` not declared")))?;
                idx.push(pos);
            }
            idx.sort_unstable();
            idx
        }
        ArffLabels::Meka => {
            let c = meka_label_count(&relation)
                .ok_or_else(|| parse_err(path, 1, "relation name carries no `-C <labels>` option"))?;
            let d = c.unsigned_abs() as usize;
            if d == 0 || d >= total {
                return Err(parse_err(path, 1, format!("-C {c} does not fit {total} attributes")));
            }
            if c > 0 {
                (0..d).collect()
            } else {
                (total - d..total).collect()
            }
        }
    };
    if label_idx.is_empty() {
        return Err(parse_err(path, 1, "no label attributes selected"));
    }
    let is_label = |c: usize| label_idx.binary_search(&c).is_ok();
    let feature_idx: Vec<usize> = (0..total).filter(|&c| !is_label(c)).collect();

    for &c in &feature_idx {
        let kind = attributes[c].1.to_ascii_lowercase();
        if !(kind.starts_with("numeric") || kind.starts_with("real") || kind.starts_with("integer")) {
            return Err(parse_err(
                path,
                1,
                format!("feature attribute `{}` has unsupported type `{}`", attributes[c].0, attributes[c].1),
            ));
        }
    }

    let n = rows.len();
    let mut x = Matrix::zeros(n, feature_idx.len());
    let mut y = Matrix::zeros(n, label_idx.len());
    for (r, (lineno, values)) in rows.iter().enumerate() {
        for (j, &c) in feature_idx.iter().enumerate() {
            x.set(r, j, values[c]);
        }
        for (j, &c) in label_idx.iter().enumerate() {
            let v = values[c];
            if v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "{path}:{lineno}: label `{}` (row {r}, column {j}) is {v}; labels must be 0 or 1",
                    attributes[c].0
                )));
            }
            y.set(r, j, v);
        }
    }
    let feature_names = feature_idx.iter().map(|&c| attributes[c].0.clone()).collect();
    let label_names = label_idx.iter().map(|&c| attributes[c].0.clone()).collect();
    Dataset::with_names(name, x, y, feature_names, label_names)
}

/// One random train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub repeat: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub const DEFAULT_REPEATS: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.75;

/// `repeats` independent shuffles of `0..n`, each cut at `round(train_frac * n)`.
/// Index lists are sorted ascending.
pub fn split(n: usize, seed: u64, repeats: usize, train_frac: f64) -> Result<Vec<SplitPlan>> {
    if n < 4 {
        return Err(Error::contract(format!("splitting needs at least 4 instances, got {n}")));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::contract(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let n_train = ((train_frac * n as f64).round() as usize).clamp(1, n - 1);
    Ok((0..repeats)
        .map(|repeat| {
            let perm = Rng::new(derive_seed(seed, repeat as u64)).shuffle(n);
            let mut train = perm[..n_train].to_vec();
            let mut test = perm[n_train..].to_vec();
            train.sort_unstable();
            test.sort_unstable();
            SplitPlan {
                seed,
                repeat,
                train,
                test,
            }
        })
        .collect())
}

/// Per-feature min-max scaling fitted on training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &Matrix) -> Result<Self> {
        if x.rows() == 0 {
            return Err(Error::contract("cannot fit a scaler on zero rows"));
        }
        let mut min = x.row(0).to_vec();
        let mut max = x.row(0).to_vec();
        for row in x.row_iter().skip(1) {
            for (c, &v) in row.iter().enumerate() {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
        }
        Ok(Scaler { min, max })
    }

    /// `(x - min) / (max - min)`; constant training features map to 0. Values
    /// outside the training range are not clipped.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.min.len() {
            return Err(Error::Shape {
                op: "scaler transform",
                left: (1, self.min.len()),
                right: x.shape(),
            });
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                let range = self.max[c] - self.min[c];
                *v = if range > 0.0 { (*v - self.min[c]) / range } else { 0.0 };
            }
        }
        Ok(out)
    }
}

/// Synthetic data with a parity chain among the labels.
///
/// Features are uniform on `[0, 1)`; `y_1 = [x_1 > 0.5]` and
/// `y_j = y_{j-1} xor [x_j > 0.5]`. The clean chain is generated first, then
/// every label is flipped independently with probability `noise`.
pub fn synth_xor(n: usize, m: usize, d: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if d < 2 {
        return Err(Error::contract("synth_xor needs at least two labels"));
    }
    if m < d {
        return Err(Error::contract(format!(
            "synth_xor needs at least as many features as labels ({m} < {d})"
        )));
    }
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::contract(format!("noise {noise} outside [0, 1]")));
    }
    let mut rng = Rng::new(seed);
    let x = rng.uniform(0.0, 1.0, n, m)?;
    let mut y = Matrix::zeros(n, d);
    for r in 0..n {
        let mut prev = false;
        for j in 0..d {
            let bit = x.get(r, j) > 0.5;
            let label = if j == 0 { bit } else { prev ^ bit };
            y.set(r, j, label as u8 as f64);
            prev = label;
        }
        for j in 0..d {
            if rng.bernoulli(noise) {
                y.set(r, j, 1.0 - y.get(r, j));
            }
        }
    }
    Dataset::new(format!("synth_xor_n{n}_m{m}_d{d}"), x, y)
}
