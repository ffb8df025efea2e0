use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Composer, CompositionError};
use crate::embedding::EmbeddingTable;
use crate::kb::CombinationRule;

pub const W_C: &str = "W_c";
pub const B_C: &str = "b_c";
pub const W_A: &str = "W_a";
pub const B_A: &str = "b_a";
/// Second attention direction when the two directions do not share weights.
pub const W_A2: &str = "W_a2";
pub const B_A2: &str = "b_a2";
/// Shared component of the low-rank rule decomposition.
pub const W_C_COMMON: &str = "W_cc";

pub fn rule_matrix_name(rule: CombinationRule) -> String {
    format!("W_c.{}", rule.as_str())
}

pub fn rule_u_name(rule: CombinationRule) -> String {
    format!("U.{}", rule.as_str())
}

pub fn rule_v_name(rule: CombinationRule) -> String {
    format!("V.{}", rule.as_str())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    /// Weight matrix: uniform init, included in the L2 penalty.
    Weight,
    /// Bias vector: zero init, not penalized.
    Bias,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub role: ParamRole,
}

impl ParamSpec {
    pub fn weight(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols,
            role: ParamRole::Weight,
        }
    }

    pub fn bias(name: impl Into<String>, rows: usize) -> Self {
        Self {
            name: name.into(),
            rows,
            cols: 1,
            role: ParamRole::Bias,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub value: DMatrix<f64>,
    pub role: ParamRole,
}

/// All learnable state of one composition model. The sememe table doubles
/// as the tied classifier for sememe prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub tensors: BTreeMap<String, Tensor>,
    pub sememes: EmbeddingTable,
}

impl ModelParams {
    /// Weight matrices uniform in `[-1/sqrt(2d), 1/sqrt(2d)]`, biases zero.
    pub fn init(composer: &dyn Composer, dim: usize, sememes: EmbeddingTable, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / ((2 * dim) as f64).sqrt();
        let tensors = composer
            .param_specs(dim)
            .into_iter()
            .map(|spec| {
                let value = match spec.role {
                    ParamRole::Weight => {
                        DMatrix::from_fn(spec.rows, spec.cols, |_, _| rng.random_range(-bound..=bound))
                    }
                    ParamRole::Bias => DMatrix::zeros(spec.rows, spec.cols),
                };
                (spec.name, Tensor { value, role: spec.role })
            })
            .collect();
        Self { dim, tensors, sememes }
    }

    pub fn get(&self, name: &str) -> Result<&DMatrix<f64>, CompositionError> {
        self.tensors
            .get(name)
            .map(|t| &t.value)
            .ok_or_else(|| CompositionError::MissingTensor(name.to_owned()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut DMatrix<f64>, CompositionError> {
        self.tensors
            .get_mut(name)
            .map(|t| &mut t.value)
            .ok_or_else(|| CompositionError::MissingTensor(name.to_owned()))
    }

    /// A bias tensor as a column vector.
    pub fn vector(&self, name: &str) -> Result<DVector<f64>, CompositionError> {
        Ok(self.get(name)?.column(0).into_owned())
    }

    pub fn sememe_row(&self, i: usize) -> DVector<f64> {
        self.sememes.row(i)
    }

    /// Sum of squared entries over the penalized (weight) tensors.
    pub fn weight_sq_norm(&self) -> f64 {
        self.tensors
            .values()
            .filter(|t| t.role == ParamRole::Weight)
            .map(|t| t.value.norm_squared())
            .sum()
    }
}

/// Gradients mirroring [`ModelParams`]; sememe rows are stored sparsely and
/// rows never touched are implicitly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub tensors: BTreeMap<String, DMatrix<f64>>,
    pub sememe_rows: BTreeMap<usize, DVector<f64>>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            tensors: params
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), DMatrix::zeros(t.value.nrows(), t.value.ncols())))
                .collect(),
            sememe_rows: BTreeMap::new(),
        }
    }

    pub fn tensor_mut(&mut self, name: &str) -> Result<&mut DMatrix<f64>, CompositionError> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| CompositionError::MissingTensor(name.to_owned()))
    }

    pub fn add_to_sememe(&mut self, i: usize, g: &DVector<f64>) {
        match self.sememe_rows.get_mut(&i) {
            Some(row) => *row += g,
            None => {
                self.sememe_rows.insert(i, g.clone());
            }
        }
    }

    pub fn add_scaled_sememe(&mut self, i: usize, scale: f64, g: &DVector<f64>) {
        match self.sememe_rows.get_mut(&i) {
            Some(row) => row.axpy(scale, g, 1.0),
            None => {
                self.sememe_rows.insert(i, g * scale);
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .values()
            .map(|m| m.amax())
            .chain(self.sememe_rows.values().map(|v| v.amax()))
            .fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }
}
