//! Composition models that map two constituent embeddings (and optionally
//! their sememes and combination rule) to an MWE embedding.
//!
//! Every model implements [`Composer`]; [`ComposerRegistry`] maps the
//! command-line names (`add`, `mul`, `scas_s`, `scas`, `scmsa`, `scas_r`,
//! `scmsa_r`) to constructors so callers pick a model at runtime.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use thiserror::Error;

use crate::kb::CombinationRule;

mod models;
mod ops;
pub mod params;
mod registry;

pub use models::{Additive, AggregatedSememe, ConcatTanh, Multiplicative, MutualAttention};
pub use ops::{
    aggregate_sememes, attend, compose_add, compose_mul, composition_matrix_for_rule, softmax,
    Attention, MatrixSource,
};
pub use params::{GradientSet, ModelParams, ParamRole, ParamSpec, Tensor};
pub use registry::{ComposerFactory, ComposerOptions, ComposerRegistry};

#[derive(Debug, Error, PartialEq)]
pub enum CompositionError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("sememe set is empty")]
    EmptySememeSet,
    #[error("sememe index {0} is outside the sememe table")]
    UnknownSememe(usize),
    #[error("model needs a combination rule for every MWE")]
    MissingRule,
    #[error("parameter tensor `{0}` is missing")]
    MissingTensor(String),
    #[error("forward cache is missing")]
    MissingCache,
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("unknown rule mode `{0}` (expected full or lowrank)")]
    UnknownRuleMode(String),
}

/// How rule-specific composition matrices are parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleMode {
    /// An independent `d x 2d` matrix per rule.
    Full,
    /// `U^r V^r + W_cc` with rank-`h_r` rule perturbations.
    LowRank,
}

impl RuleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleMode::Full => "full",
            RuleMode::LowRank => "lowrank",
        }
    }
}

impl fmt::Display for RuleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleMode {
    type Err = CompositionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(RuleMode::Full),
            "lowrank" => Ok(RuleMode::LowRank),
            _ => Err(CompositionError::UnknownRuleMode(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Add,
    Mul,
    ScasS,
    Scas,
    Scmsa,
    ScasR(RuleMode),
    ScmsaR(RuleMode),
}

impl ModelKind {
    /// Registry name, without the rule mode.
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Add => "add",
            ModelKind::Mul => "mul",
            ModelKind::ScasS => "scas_s",
            ModelKind::Scas => "scas",
            ModelKind::Scmsa => "scmsa",
            ModelKind::ScasR(_) => "scas_r",
            ModelKind::ScmsaR(_) => "scmsa_r",
        }
    }

    pub fn rule_mode(self) -> Option<RuleMode> {
        match self {
            ModelKind::ScasR(m) | ModelKind::ScmsaR(m) => Some(m),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule_mode() {
            Some(m) => write!(f, "{}:{}", self.name(), m),
            None => f.write_str(self.name()),
        }
    }
}

/// Everything a composer may read about one MWE.
#[derive(Debug, Clone, PartialEq)]
pub struct MweInput {
    pub w1: DVector<f64>,
    pub w2: DVector<f64>,
    /// Sememe positions of the first constituent, in enumeration order.
    pub sememes1: Vec<usize>,
    pub sememes2: Vec<usize>,
    pub rule: Option<CombinationRule>,
}

/// Intermediates kept from the forward pass for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    /// Input to the composition matrix (`[w1 + w2; w1' + w2']` or `[w1; w2]`).
    pub input: DVector<f64>,
    pub pre_activation: DVector<f64>,
    pub aggregate1: Option<DVector<f64>>,
    pub aggregate2: Option<DVector<f64>>,
    /// Attention of the query on `w2` over the sememes of `w1`.
    pub attention1: Option<Attention>,
    /// Attention of the query on `w1` over the sememes of `w2`.
    pub attention2: Option<Attention>,
}

impl Cache {
    fn new(input: DVector<f64>, pre_activation: DVector<f64>) -> Self {
        Self {
            input,
            pre_activation,
            aggregate1: None,
            aggregate2: None,
            attention1: None,
            attention2: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComposedOutput {
    pub p: DVector<f64>,
    pub cache: Option<Cache>,
}

/// A composition model. Implementations are stateless apart from their
/// structural options; all learnable state lives in [`ModelParams`].
pub trait Composer: Send + Sync + fmt::Debug {
    fn kind(&self) -> ModelKind;

    fn uses_sememes(&self) -> bool {
        false
    }

    fn requires_rule(&self) -> bool {
        self.kind().rule_mode().is_some()
    }

    /// `Some(flag)` for attention models.
    fn shared_attention(&self) -> Option<bool> {
        None
    }

    fn param_specs(&self, dim: usize) -> Vec<ParamSpec>;

    fn forward(&self, input: &MweInput, params: &ModelParams) -> Result<ComposedOutput, CompositionError>;

    /// Accumulates dL/dθ into `grads` given dL/dp.
    fn backward(
        &self,
        input: &MweInput,
        params: &ModelParams,
        out: &ComposedOutput,
        grad_p: &DVector<f64>,
        grads: &mut GradientSet,
    ) -> Result<(), CompositionError>;
}
