//! Exact-match accuracy, micro-F1, the paired t-test and benchmark aggregation.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

fn check_same_shape(op: &'static str, pred: &Matrix, truth: &Matrix) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::Shape {
            op,
            left: pred.shape(),
            right: truth.shape(),
        });
    }
    if pred.rows() == 0 {
        return Err(Error::contract(format!("{op} of zero rows")));
    }
    Ok(())
}

/// Fraction of rows whose whole label vector is predicted correctly.
pub fn ema(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    check_same_shape("ema", pred, truth)?;
    let hits = pred
        .row_iter()
        .zip(truth.row_iter())
        .filter(|(p, t)| p == t)
        .count();
    Ok(hits as f64 / pred.rows() as f64)
}

/// Confusion counts pooled over every cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

pub fn pooled_counts(pred: &Matrix, truth: &Matrix) -> Result<Counts> {
    check_same_shape("micro_f1", pred, truth)?;
    let mut c = Counts::default();
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p == 1.0, t == 1.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN)`, and 0 when there are no positives in either matrix.
pub fn micro_f1(pred: &Matrix, truth: &Matrix) -> Result<f64> {
    let c = pooled_counts(pred, truth)?;
    let denom = 2 * c.tp + c.fp + c.fn_;
    Ok(if denom == 0 {
        0.0
    } else {
        (2 * c.tp) as f64 / denom as f64
    })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function, modified Lentz.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-15;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=1000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Student t cumulative distribution function.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * inc_beta(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value of a t statistic.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / 2.0, 0.5, df / (df + t * t))
}

pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Win,
    Tie,
    Loss,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Win => "win",
            Verdict::Tie => "tie",
            Verdict::Loss => "loss",
        }
    }

    pub fn flip(self) -> Verdict {
        match self {
            Verdict::Win => Verdict::Loss,
            Verdict::Tie => Verdict::Tie,
            Verdict::Loss => Verdict::Win,
        }
    }
}

/// Outcome of a paired t-test of `a` against `b`; `Win` means `a` is
/// significantly larger.
#[derive(Clone, Debug, PartialEq)]
pub struct TTestVerdict {
    pub n: usize,
    pub mean_diff: f64,
    pub t: f64,
    pub p_value: f64,
    /// Differences had zero variance, so no t statistic exists.
    pub degenerate: bool,
    pub verdict: Verdict,
}

pub fn paired_ttest(a: &[f64], b: &[f64], alpha: f64) -> Result<TTestVerdict> {
    if a.len() != b.len() {
        return Err(Error::Shape {
            op: "paired_ttest",
            left: (a.len(), 1),
            right: (b.len(), 1),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::contract(format!("paired t-test needs at least 2 pairs, got {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::contract(format!("alpha {alpha} outside (0, 1)")));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nf = n as f64;
    let mean = diffs.iter().sum::<f64>() / nf;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (nf - 1.0);

    // Identical differences: either all zero or a constant shift. Compare
    // against the spread of the data to absorb rounding in `a - b`.
    let scale = diffs.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if var.sqrt() <= 1e-12 * scale || scale == 0.0 {
        let (t, p, verdict) = if mean == 0.0 || scale == 0.0 {
            (0.0, 1.0, Verdict::Tie)
        } else if mean > 0.0 {
            (f64::INFINITY, 0.0, Verdict::Win)
        } else {
            (f64::NEG_INFINITY, 0.0, Verdict::Loss)
        };
        return Ok(TTestVerdict {
            n,
            mean_diff: mean,
            t,
            p_value: p,
            degenerate: true,
            verdict,
        });
    }
    let t = mean / (var.sqrt() / nf.sqrt());
    let p = two_sided_p(t, nf - 1.0);
    let verdict = if p < alpha {
        if mean > 0.0 {
            Verdict::Win
        } else {
            Verdict::Loss
        }
    } else {
        Verdict::Tie
    };
    Ok(TTestVerdict {
        n,
        mean_diff: mean,
        t,
        p_value: p,
        degenerate: false,
        verdict,
    })
}

/// Test-set scores of one model on one split.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub dataset: String,
    pub model: String,
    pub repeat: usize,
    pub ema: f64,
    pub micro_f1: f64,
    pub wall_time_secs: f64,
    pub param_count: usize,
    /// Hyperparameters chosen by the grid search, as `key=value` pairs.
    pub selected: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ema,
    MicroF1,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Ema, Metric::MicroF1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Ema => "ema",
            Metric::MicroF1 => "micro_f1",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::Ema => "Exact match accuracy",
            Metric::MicroF1 => "Micro-averaged F1",
        }
    }

    pub fn of(self, r: &MetricRecord) -> f64 {
        match self {
            Metric::Ema => r.ema,
            Metric::MicroF1 => r.micro_f1,
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ema" => Ok(Metric::Ema),
            "micro_f1" | "micro-f1" | "f1" => Ok(Metric::MicroF1),
            _ => Err(Error::Validation(format!("unknown metric `{s}` (expected ema or micro_f1)"))),
        }
    }
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        Summary { mean, std, n }
    }

    /// Fewer than two repeats: the standard deviation is a placeholder 0.
    pub fn single_repeat(&self) -> bool {
        self.n < 2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub dataset: String,
    pub model: String,
    pub ema: Summary,
    pub micro_f1: Summary,
    pub param_count: usize,
}

impl CellSummary {
    pub fn metric(&self, m: Metric) -> Summary {
        match m {
            Metric::Ema => self.ema,
            Metric::MicroF1 => self.micro_f1,
        }
    }
}

/// Reference model versus one competitor on one dataset and metric.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub dataset: String,
    pub metric: Metric,
    pub competitor: String,
    pub test: TTestVerdict,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Margin {
    pub win: usize,
    pub tie: usize,
    pub loss: usize,
}

impl Margin {
    fn add(&mut self, v: Verdict) {
        match v {
            Verdict::Win => self.win += 1,
            Verdict::Tie => self.tie += 1,
            Verdict::Loss => self.loss += 1,
        }
    }
}

impl std::fmt::Display for Margin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} / {} / {}", self.win, self.tie, self.loss)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkReport {
    pub reference: String,
    pub alpha: f64,
    pub datasets: Vec<String>,
    pub models: Vec<String>,
    pub cells: Vec<CellSummary>,
    /// Empty when the reference model is absent.
    pub comparisons: Vec<Comparison>,
}

/// Order of first appearance, deduplicated.
fn ordered_unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|o| o == s) {
            out.push(s.to_string());
        }
    }
    out
}

/// Summarises records per (dataset, model) and tests `reference` against
/// every other model with paired t-tests matched on repeat index.
pub fn aggregate(records: &[MetricRecord], reference: &str, alpha: f64) -> Result<BenchmarkReport> {
    let datasets = ordered_unique(records.iter().map(|r| r.dataset.as_str()));
    let models = ordered_unique(records.iter().map(|r| r.model.as_str()));
    let mut groups: BTreeMap<(String, String), Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.dataset.clone(), r.model.clone()))
            .or_default()
            .push(r);
    }
    let mut repeats: Option<Vec<usize>> = None;
    for ((ds, model), group) in &mut groups {
        group.sort_by_key(|r| r.repeat);
        let idx: Vec<usize> = group.iter().map(|r| r.repeat).collect();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract(format!("duplicate repeat index for {model} on {ds}")));
        }
        match &repeats {
            None => repeats = Some(idx),
            Some(expected) if *expected != idx => {
                return Err(Error::contract(format!(
                    "unbalanced repeats: {model} on {ds} has repeats {idx:?}, expected {expected:?}"
                )))
            }
            Some(_) => {}
        }
    }

    let mut cells = Vec::new();
    for ds in &datasets {
        for model in &models {
            let Some(group) = groups.get(&(ds.clone(), model.clone())) else {
                continue;
            };
            let ema: Vec<f64> = group.iter().map(|r| r.ema).collect();
            let f1: Vec<f64> = group.iter().map(|r| r.micro_f1).collect();
            cells.push(CellSummary {
                dataset: ds.clone(),
                model: model.clone(),
                ema: Summary::of(&ema),
                micro_f1: Summary::of(&f1),
                param_count: group[0].param_count,
            });
        }
    }

    let mut comparisons = Vec::new();
    if repeats.as_ref().is_some_and(|r| r.len() >= 2) {
        for ds in &datasets {
            let Some(base) = groups.get(&(ds.clone(), reference.to_string())) else {
                continue;
            };
            for model in models.iter().filter(|m| *m != reference) {
                let Some(other) = groups.get(&(ds.clone(), model.clone())) else {
                    continue;
                };
                for metric in Metric::ALL {
                    let a: Vec<f64> = base.iter().map(|r| metric.of(r)).collect();
                    let b: Vec<f64> = other.iter().map(|r| metric.of(r)).collect();
                    comparisons.push(Comparison {
                        dataset: ds.clone(),
                        metric,
                        competitor: model.clone(),
                        test: paired_ttest(&a, &b, alpha)?,
                    });
                }
            }
        }
    }
    Ok(BenchmarkReport {
        reference: reference.to_string(),
        alpha,
        datasets,
        models,
        cells,
        comparisons,
    })
}

impl BenchmarkReport {
    pub fn cell(&self, dataset: &str, model: &str) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.dataset == dataset && c.model == model)
    }

    pub fn comparison(&self, dataset: &str, model: &str, metric: Metric) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.dataset == dataset && c.competitor == model && c.metric == metric)
    }

    /// Reference win/tie/loss against one competitor, over datasets.
    pub fn margin_vs_model(&self, model: &str, metric: Metric) -> Margin {
        let mut m = Margin::default();
        self.comparisons
            .iter()
            .filter(|c| c.competitor == model && c.metric == metric)
            .for_each(|c| m.add(c.test.verdict));
        m
    }

    /// Reference win/tie/loss on one dataset, over competitors.
    pub fn margin_on_dataset(&self, dataset: &str, metric: Metric) -> Margin {
        let mut m = Margin::default();
        self.comparisons
            .iter()
            .filter(|c| c.dataset == dataset && c.metric == metric)
            .for_each(|c| m.add(c.test.verdict));
        m
    }

    /// One line per cell summary.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("dataset,model,repeats,ema_mean,ema_std,micro_f1_mean,micro_f1_std,params\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.dataset, c.model, c.ema.n, c.ema.mean, c.ema.std, c.micro_f1.mean, c.micro_f1.std, c.param_count
            );
        }
        out
    }

    pub fn ttests_csv(&self) -> String {
        let mut out = String::from("dataset,metric,reference,competitor,mean_diff,t,p_value,degenerate,verdict\n");
        for c in &self.comparisons {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                c.dataset,
                c.metric.name(),
                self.reference,
                c.competitor,
                c.test.mean_diff,
                c.test.t,
                c.test.p_value,
                c.test.degenerate,
                c.test.verdict.as_str()
            );
        }
        out
    }

    /// Markdown tables of mean±std cells with significance marks and margins.
    pub fn markdown(&self) -> String {
        let r = &self.reference;
        let mut out = String::new();
        let _ = writeln!(out, "# Benchmark report\n");
        let _ = writeln!(
            out,
            "Cells are mean±std over repeats (sample standard deviation). Marks compare `{r}` with each \
             competitor by a two-sided paired t-test at α = {}:\n",
            self.alpha
        );
        let _ = writeln!(out, "- `⊖ {r} better`: `{r}` is significantly higher than this model.");
        let _ = writeln!(out, "- `↑ {r} worse`: `{r}` is significantly lower than this model.");
        let _ = writeln!(out, "- no mark: no significant difference (tie).\n");
        let _ = writeln!(
            out,
            "The `#win/#tie/#loss` column counts outcomes for `{r}` against the row's model over datasets; \
             the last row counts them per dataset over competitors.\n"
        );
        if self.cells.iter().any(|c| c.ema.single_repeat()) {
            let _ = writeln!(out, "Only one repeat was run: standard deviations are reported as 0.\n");
        }
        let has_tests = !self.comparisons.is_empty();
        for metric in Metric::ALL {
            let _ = writeln!(out, "## {}\n", metric.title());
            let mut header = String::from("| Models |");
            let mut rule = String::from("|---|");
            for ds in &self.datasets {
                let _ = write!(header, " {ds} |");
                rule.push_str("---|");
            }
            if has_tests {
                header.push_str(" #win/#tie/#loss |");
                rule.push_str("---|");
            }
            let _ = writeln!(out, "{header}\n{rule}");
            let mut ordered: Vec<&String> = self.models.iter().filter(|m| *m != r).collect();
            if self.models.contains(r) {
                ordered.push(r);
            }
            for model in ordered {
                let mut line = format!("| {model} |");
                for ds in &self.datasets {
                    match self.cell(ds, model) {
                        Some(c) => {
                            let s = c.metric(metric);
                            let _ = write!(line, " {:.4}±{:.4}", s.mean, s.std);
                            if let Some(cmp) = self.comparison(ds, model, metric) {
                                match cmp.test.verdict {
                                    Verdict::Win => {
                                        let _ = write!(line, " ⊖ {r} better");
                                    }
                                    Verdict::Loss => {
                                        let _ = write!(line, " ↑ {r} worse");
                                    }
                                    Verdict::Tie => {}
                                }
                            }
                            line.push_str(" |");
                        }
                        None => line.push_str(" - |"),
                    }
                }
                if has_tests {
                    if model == r {
                        line.push_str(" - |");
                    } else {
                        let _ = write!(line, " {} |", self.margin_vs_model(model, metric));
                    }
                }
                let _ = writeln!(out, "{line}");
            }
            if has_tests {
                let mut line = String::from("| #win/#tie/#loss |");
                for ds in &self.datasets {
                    let _ = write!(line, " {} |", self.margin_on_dataset(ds, metric));
                }
                line.push_str(" |");
                let _ = writeln!(out, "{line}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "## Parameters\n");
        let mut header = String::from("| Models |");
        let mut rule = String::from("|---|");
        for ds in &self.datasets {
            let _ = write!(header, " {ds} |");
            rule.push_str("---|");
        }
        let _ = writeln!(out, "{header}\n{rule}");
        for model in &self.models {
            let mut line = format!("| {model} |");
            for ds in &self.datasets {
                match self.cell(ds, model) {
                    Some(c) => {
                        let _ = write!(line, " {} |", group_thousands(c.param_count));
                    }
                    None => line.push_str(" - |"),
                }
            }
            let _ = writeln!(out, "{line}");
        }
        out
    }
}

/// `23502` becomes `23,502`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// One row per record. Wall time is left out so reruns produce identical bytes.
pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from("dataset,model,repeat,ema,micro_f1,params,selected\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.dataset, r.model, r.repeat, r.ema, r.micro_f1, r.param_count, r.selected
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn ema_examples() {
        let t = m(&[&[1.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(ema(&t, &t).unwrap(), 1.0);
        assert_eq!(ema(&m(&[&[1.0, 0.0], &[0.0, 1.0]]), &t).unwrap(), 0.5);
        assert_eq!(ema(&Matrix::zeros(2, 2), &t).unwrap(), 0.0);
        assert!(ema(&Matrix::zeros(2, 3), &t).is_err());
    }

    #[test]
    fn micro_f1_examples() {
        let t = m(&[&[1.0, 0.0], &[1.0, 1.0]]);
        assert_eq!(micro_f1(&t, &t).unwrap(), 1.0);
        let p = m(&[&[1.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(pooled_counts(&p, &t).unwrap(), Counts { tp: 2, fp: 1, fn_: 1 });
        assert_abs_diff_eq!(micro_f1(&p, &t).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        let z = Matrix::zeros(2, 2);
        assert_eq!(micro_f1(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(ln_gamma(10.0), 362_880f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn t_cdf_closed_forms() {
        // df = 1 is Cauchy, df = 2 has a closed form
        for t in [-5.0, -1.0, -0.2, 0.0, 0.7, 3.0] {
            let cauchy = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert_abs_diff_eq!(student_t_cdf(t, 1.0), cauchy, epsilon = 1e-12);
            let df2 = 0.5 + t / (2.0 * (2.0 + t * t).sqrt());
            assert_abs_diff_eq!(student_t_cdf(t, 2.0), df2, epsilon = 1e-12);
        }
    }

    #[test]
    fn ttest_examples() {
        let a = [0.6, 0.7, 0.8, 0.9, 1.0];
        let r = paired_ttest(&a, &a, 0.05).unwrap();
        assert_eq!(r.verdict, Verdict::Tie);

        let b: Vec<f64> = a.iter().map(|v| v - 1.0).collect();
        let r = paired_ttest(&a, &b, 0.05).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.verdict, Verdict::Win);
        assert_eq!(paired_ttest(&b, &a, 0.05).unwrap().verdict, Verdict::Loss);

        let diffs = [0.5, 0.1, 0.3, 0.2, 0.4];
        let zeros = [0.0; 5];
        let r = paired_ttest(&diffs, &zeros, 0.05).unwrap();
        assert_abs_diff_eq!(r.mean_diff, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(r.t, 0.3 / (0.025f64.sqrt() / 5f64.sqrt()), epsilon = 1e-9);
        assert_abs_diff_eq!(r.t, 4.2426, epsilon = 1e-4);
        assert_abs_diff_eq!(r.p_value, 0.0132, epsilon = 1e-4);
        assert_eq!(r.verdict, Verdict::Win);

        assert!(paired_ttest(&[1.0], &[0.0], 0.05).is_err());
        assert!(paired_ttest(&[1.0, 2.0], &[0.0], 0.05).is_err());
    }

    fn rec(ds: &str, model: &str, repeat: usize, ema: f64) -> MetricRecord {
        MetricRecord {
            dataset: ds.into(),
            model: model.into(),
            repeat,
            ema,
            micro_f1: ema,
            wall_time_secs: 1.5,
            param_count: 10,
            selected: String::new(),
        }
    }

    #[test]
    fn aggregate_mean_std() {
        let vals = [0.6, 0.7, 0.65, 0.7, 0.6];
        let records: Vec<_> = vals.iter().enumerate().map(|(i, &v)| rec("d", "msdn", i, v)).collect();
        let report = aggregate(&records, "msdn", 0.05).unwrap();
        let c = report.cell("d", "msdn").unwrap();
        assert_abs_diff_eq!(c.ema.mean, 0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(c.ema.std, 0.05, epsilon = 1e-4);
        assert_abs_diff_eq!(c.ema.std, (0.01f64 / 4.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn aggregate_single_repeat_and_imbalance() {
        let report = aggregate(&[rec("d", "msdn", 0, 0.5)], "msdn", 0.05).unwrap();
        let c = report.cell("d", "msdn").unwrap();
        assert_eq!(c.ema.std, 0.0);
        assert!(c.ema.single_repeat());
        assert!(report.markdown().contains("Only one repeat"));

        let unbalanced = [rec("d", "msdn", 0, 0.5), rec("d", "msdn", 1, 0.5), rec("d", "br", 0, 0.4)];
        assert!(matches!(aggregate(&unbalanced, "msdn", 0.05), Err(Error::Contract(_))));
    }

    #[test]
    fn aggregate_margins() {
        let mut records = Vec::new();
        for i in 0..5 {
            let jitter = i as f64 * 0.01;
            records.push(rec("a", "msdn", i, 0.8 + jitter));
            records.push(rec("a", "br", i, 0.5 + jitter * 0.5));
            records.push(rec("a", "cc", i, 0.8 + jitter * (1.0 + (i % 2) as f64)));
            records.push(rec("b", "msdn", i, 0.3 + jitter));
            records.push(rec("b", "br", i, 0.6 - jitter));
            records.push(rec("b", "cc", i, 0.31 + jitter * (i % 3) as f64));
        }
        let report = aggregate(&records, "msdn", 0.05).unwrap();
        assert_eq!(report.margin_vs_model("br", Metric::Ema), Margin { win: 1, tie: 0, loss: 1 });
        assert_eq!(report.margin_on_dataset("a", Metric::Ema).win, 1);
        assert_eq!(report.comparisons.len(), 2 * 2 * 2);
        let md = report.markdown();
        assert!(md.contains("⊖ msdn better"));
        assert!(md.contains("↑ msdn worse"));
        assert!(md.contains("| #win/#tie/#loss |"));
        let ttests = report.ttests_csv();
        assert_eq!(ttests.lines().count(), 1 + 8);
    }

    #[test]
    fn reference_against_itself_ties() {
        let mut records = Vec::new();
        for i in 0..5 {
            records.push(rec("a", "msdn", i, 0.5 + i as f64 * 0.03));
            records.push(rec("a", "msdn_copy", i, 0.5 + i as f64 * 0.03));
        }
        let report = aggregate(&records, "msdn", 0.05).unwrap();
        assert_eq!(report.margin_vs_model("msdn_copy", Metric::Ema), Margin { win: 0, tie: 1, loss: 0 });
    }

    #[test]
    fn metrics_csv_excludes_wall_time() {
        let csv = metrics_csv(&[rec("d", "br", 0, 0.25)]);
        assert_eq!(csv, "dataset,model,repeat,ema,micro_f1,params,selected\nd,br,0,0.25,0.25,10,\n");
    }

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(6), "6");
        assert_eq!(group_thousands(23502), "23,502");
        assert_eq!(group_thousands(4770383), "4,770,383");
    }

    proptest::proptest! {
        #[test]
        fn ttest_antisymmetric(a in proptest::collection::vec(0.0f64..1.0, 5), b in proptest::collection::vec(0.0f64..1.0, 5)) {
            let ab = paired_ttest(&a, &b, 0.05).unwrap();
            let ba = paired_ttest(&b, &a, 0.05).unwrap();
            proptest::prop_assert_eq!(ab.verdict.flip(), ba.verdict);
            proptest::prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        }

        #[test]
        fn ema_row_permutation_invariant(seed in 0u64..1000) {
            let mut rng = crate::numeric::Rng::new(seed);
            let p = rng.uniform(0.0, 1.0, 12, 3).unwrap().map(|v| (v > 0.5) as u8 as f64);
            let t = rng.uniform(0.0, 1.0, 12, 3).unwrap().map(|v| (v > 0.5) as u8 as f64);
            let perm = rng.shuffle(12);
            proptest::prop_assert_eq!(ema(&p, &t).unwrap(), ema(&p.select_rows(&perm), &t.select_rows(&perm)).unwrap());
        }

        #[test]
        fn perfect_ema_iff_perfect_f1(seed in 0u64..1000, flip in proptest::bool::ANY) {
            let mut rng = crate::numeric::Rng::new(seed);
            let mut t = rng.uniform(0.0, 1.0, 6, 3).unwrap().map(|v| (v > 0.5) as u8 as f64);
            t.set(0, 0, 1.0);
            let mut p = t.clone();
            if flip {
                let (r, c) = (rng.below(6) as usize, rng.below(3) as usize);
                p.set(r, c, 1.0 - p.get(r, c));
            }
            let e = ema(&p, &t).unwrap();
            let f = micro_f1(&p, &t).unwrap();
            proptest::prop_assert_eq!(e == 1.0, f == 1.0);
        }
    }
}
