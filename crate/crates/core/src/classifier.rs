use crate::error::{Error, Result};
use crate::numeric::Matrix;

/// Per-instance label scores and the thresholded 0/1 decisions.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probabilities: Matrix,
    pub labels: Matrix,
}

impl Prediction {
    pub fn len(&self) -> usize {
        self.labels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.rows() == 0
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub(crate) fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::contract(format!(
            "decision threshold must lie in (0, 1), got {threshold}"
        )));
    }
    Ok(())
}

/// Label decision rule shared by every model: `p >= threshold` is positive.
#[inline]
pub fn decide(p: f64, threshold: f64) -> f64 {
    if p >= threshold {
        1.0
    } else {
        0.0
    }
}

/// Common prediction surface of every multi-label model in the crate.
pub trait MultiLabelClassifier {
    fn input_dim(&self) -> usize;
    fn label_dim(&self) -> usize;

    /// Scores in (0, 1) and hard labels for a single instance.
    fn predict_row(&self, x: &[f64], threshold: f64) -> Result<(Vec<f64>, Vec<f64>)>;

    fn predict(&self, x: &Matrix, threshold: f64) -> Result<Prediction> {
        check_threshold(threshold)?;
        let d = self.label_dim();
        if x.rows() > 0 && x.cols() != self.input_dim() {
            return Err(Error::Shape {
                op: "predict",
                left: (x.rows(), self.input_dim()),
                right: x.shape(),
            });
        }
        let mut probabilities = Matrix::zeros(x.rows(), d);
        let mut labels = Matrix::zeros(x.rows(), d);
        for (r, row) in x.row_iter().enumerate() {
            let (p, y) = self.predict_row(row, threshold)?;
            probabilities.row_mut(r).copy_from_slice(&p);
            labels.row_mut(r).copy_from_slice(&y);
        }
        Ok(Prediction {
            probabilities,
            labels,
        })
    }
}

/// Checks that `y` is a non-empty 0/1 matrix aligned with `x`.
pub(crate) fn check_training_data(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::contract("training set is empty"));
    }
    if x.rows() != y.rows() {
        return Err(Error::Shape {
            op: "training data",
            left: x.shape(),
            right: y.shape(),
        });
    }
    for r in 0..y.rows() {
        for (c, &v) in y.row(r).iter().enumerate() {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "label at row {r}, column {c} is {v}; labels must be 0 or 1"
                )));
            }
        }
    }
    if !x.is_finite() {
        return Err(Error::Validation("features contain NaN or infinity".into()));
    }
    Ok(())
}
