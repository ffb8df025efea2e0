//! Losses, analytic gradients, SGD and finite-difference verification for
//! the similarity and sememe-prediction tasks.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use thiserror::Error;

use crate::composition::{CompositionError, MweInput};
use crate::embedding::EmbeddingError;

pub mod checkpoint;
mod data;
mod gradcheck;
mod loss;
mod sgd;

pub use data::{build_examples, ExampleSource};
pub use gradcheck::{grad_check, GradCheckDims};
pub use loss::{loss_sememe, loss_similarity, predict_sememes, regularization, sigmoid, LOG_CLAMP};
pub use sgd::{backward, example_loss, sgd_step, train, EpochRecord, TrainState};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("non-finite loss at epoch {epoch} on `{mwe}`")]
    NonFiniteLoss { epoch: usize, mwe: String },
    #[error("invalid hyperparameter: {0}")]
    BadHyperparams(String),
    #[error("training set is empty")]
    NoExamples,
    #[error("missing inputs: {}", .0.join(", "))]
    Coverage(Vec<String>),
    #[error("unknown task `{0}` (expected similarity or sememe)")]
    UnknownTask(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Similarity,
    Sememe,
}

impl Task {
    pub const ALL: [Task; 2] = [Task::Similarity, Task::Sememe];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Similarity => "similarity",
            Task::Sememe => "sememe",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "similarity" => Ok(Task::Similarity),
            "sememe" => Ok(Task::Sememe),
            _ => Err(TrainError::UnknownTask(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub dim: usize,
    pub h_r: usize,
    pub lambda: f64,
    /// Weight on positive labels in the sememe loss.
    pub k: f64,
    pub lr0: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
}

impl Hyperparams {
    pub fn for_task(task: Task) -> Self {
        Self {
            dim: 200,
            h_r: 5,
            lambda: 1e-4,
            k: 100.0,
            lr0: match task {
                Task::Similarity => 0.01,
                Task::Sememe => 0.2,
            },
            decay: 0.99,
            epochs: 20,
            seed: 0,
            batch_size: 1,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadHyperparams(m.to_owned()));
        if self.dim == 0 {
            return bad("d must be positive");
        }
        if self.h_r == 0 {
            return bad("h_r must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be non-negative");
        }
        if !(self.k > 0.0) {
            return bad("k must be positive");
        }
        if !(self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("decay must lie in (0, 1]");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        Ok(())
    }

    /// Learning rate after `epochs` completed epochs.
    pub fn lr_at(&self, epochs: usize) -> f64 {
        self.lr0 * self.decay.powi(epochs as i32)
    }
}

/// What the composed embedding is trained against.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Reference embedding of the MWE.
    Reference(DVector<f64>),
    /// Gold sememe indicator over the inventory.
    Sememes(Vec<bool>),
}

impl Target {
    pub fn task(&self) -> Task {
        match self {
            Target::Reference(_) => Task::Similarity,
            Target::Sememes(_) => Task::Sememe,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub name: String,
    pub input: MweInput,
    pub target: Target,
}

/// Task-specific constants of the per-example objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    /// Coefficient of the L2 penalty for a single example.
    pub lambda: f64,
    pub k: f64,
}
