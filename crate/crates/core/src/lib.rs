//! Multi-label classification with a multi-scale 1-D convolutional
//! label-relation network (MSDN), the classical problem-transformation
//! baselines (binary relevance, classifier chains, probabilistic classifier
//! chains, stacked binary relevance), and the evaluation protocol used to
//! compare them.

pub mod error;
pub mod numeric;
pub mod layers;
pub mod classifier;
pub mod training;
pub mod msdn;
pub mod baselines;
pub mod data;
pub mod eval;
pub mod persist;
pub mod experiment;

pub use error::{Error, Result};
pub use numeric::{Matrix, Rng};
