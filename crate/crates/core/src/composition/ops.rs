use nalgebra::{DMatrix, DVector};

use super::params::{
    rule_matrix_name, rule_u_name, rule_v_name, GradientSet, ModelParams, W_C, W_C_COMMON,
};
use super::{CompositionError, RuleMode};
use crate::embedding::EmbeddingTable;
use crate::kb::CombinationRule;

fn check_dim(expected: usize, found: usize) -> Result<(), CompositionError> {
    if expected != found {
        return Err(CompositionError::DimensionMismatch { expected, found });
    }
    Ok(())
}

pub fn compose_add(w1: &DVector<f64>, w2: &DVector<f64>) -> Result<DVector<f64>, CompositionError> {
    check_dim(w1.len(), w2.len())?;
    Ok(w1 + w2)
}

pub fn compose_mul(w1: &DVector<f64>, w2: &DVector<f64>) -> Result<DVector<f64>, CompositionError> {
    check_dim(w1.len(), w2.len())?;
    Ok(w1.component_mul(w2))
}

/// Unweighted sum of the member sememe embeddings.
pub fn aggregate_sememes(set: &[usize], table: &EmbeddingTable) -> Result<DVector<f64>, CompositionError> {
    if set.is_empty() {
        return Err(CompositionError::EmptySememeSet);
    }
    let mut acc = DVector::zeros(table.dim());
    for &s in set {
        if s >= table.len() {
            return Err(CompositionError::UnknownSememe(s));
        }
        acc += table.matrix().row(s).transpose();
    }
    Ok(acc)
}

/// Result of one attention direction: a query built from one constituent
/// scoring the other constituent's sememes.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub query: DVector<f64>,
    /// Softmax weights, aligned with the target sememe slice.
    pub weights: Vec<f64>,
    pub pooled: DVector<f64>,
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// `e = tanh(W_a w + b_a)`, `a_i = softmax_i(s_i . e)`, `w' = sum_i a_i s_i`.
pub fn attend(
    source: &DVector<f64>,
    targets: &[usize],
    w_a: &DMatrix<f64>,
    b_a: &DVector<f64>,
    table: &EmbeddingTable,
) -> Result<Attention, CompositionError> {
    if targets.is_empty() {
        return Err(CompositionError::EmptySememeSet);
    }
    check_dim(w_a.ncols(), source.len())?;
    let query = (w_a * source + b_a).map(f64::tanh);
    attend_with_query(query, targets, table)
}

pub(crate) fn attend_with_query(
    query: DVector<f64>,
    targets: &[usize],
    table: &EmbeddingTable,
) -> Result<Attention, CompositionError> {
    let mut logits = Vec::with_capacity(targets.len());
    for &s in targets {
        if s >= table.len() {
            return Err(CompositionError::UnknownSememe(s));
        }
        logits.push(table.matrix().row(s).transpose().dot(&query));
    }
    let weights = softmax(&logits);
    let mut pooled = DVector::zeros(table.dim());
    for (&s, &a) in targets.iter().zip(&weights) {
        pooled += table.matrix().row(s).transpose() * a;
    }
    Ok(Attention {
        query,
        weights,
        pooled,
    })
}

/// Backpropagates `grad_pooled` through one attention direction. Returns the
/// gradient with respect to the query pre-activation `W_a w + b_a`, and adds
/// the sememe-row gradients into `grads`.
pub(crate) fn attend_backward(
    att: &Attention,
    targets: &[usize],
    table: &EmbeddingTable,
    grad_pooled: &DVector<f64>,
    grads: &mut GradientSet,
) -> DVector<f64> {
    // dL/da_i = s_i . g
    let da: Vec<f64> = targets
        .iter()
        .map(|&s| table.matrix().row(s).transpose().dot(grad_pooled))
        .collect();
    let mean: f64 = att.weights.iter().zip(&da).map(|(a, d)| a * d).sum();
    let mut grad_query = DVector::zeros(att.query.len());
    for ((&s, &a), &d) in targets.iter().zip(&att.weights).zip(&da) {
        let dlogit = a * (d - mean);
        let row = table.matrix().row(s).transpose();
        grad_query.axpy(dlogit, &row, 1.0);
        // direct path through the pooled sum plus the logit path through s_i . e
        let mut g = grad_pooled * a;
        g.axpy(dlogit, &att.query, 1.0);
        grads.add_to_sememe(s, &g);
    }
    grad_query.component_mul(&att.query.map(|e| 1.0 - e * e))
}

/// How the `d x 2d` composition matrix is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixSource {
    Shared,
    PerRule(RuleMode),
}

/// Effective composition matrix for `rule` under `mode`: the rule's own
/// matrix, or `U^r V^r + W_cc` for the low-rank decomposition.
pub fn composition_matrix_for_rule(
    rule: CombinationRule,
    params: &ModelParams,
    mode: RuleMode,
) -> Result<DMatrix<f64>, CompositionError> {
    match mode {
        RuleMode::Full => Ok(params.get(&rule_matrix_name(rule))?.clone()),
        RuleMode::LowRank => {
            let u = params.get(&rule_u_name(rule))?;
            let v = params.get(&rule_v_name(rule))?;
            Ok(u * v + params.get(W_C_COMMON)?)
        }
    }
}

pub(crate) fn composition_matrix(
    source: MatrixSource,
    rule: Option<CombinationRule>,
    params: &ModelParams,
) -> Result<DMatrix<f64>, CompositionError> {
    match source {
        MatrixSource::Shared => Ok(params.get(W_C)?.clone()),
        MatrixSource::PerRule(mode) => {
            composition_matrix_for_rule(rule.ok_or(CompositionError::MissingRule)?, params, mode)
        }
    }
}

/// Routes the gradient of the effective composition matrix to the tensors
/// it was built from.
pub(crate) fn composition_matrix_backward(
    source: MatrixSource,
    rule: Option<CombinationRule>,
    params: &ModelParams,
    grad_w: &DMatrix<f64>,
    grads: &mut GradientSet,
) -> Result<(), CompositionError> {
    match source {
        MatrixSource::Shared => *grads.tensor_mut(W_C)? += grad_w,
        MatrixSource::PerRule(RuleMode::Full) => {
            let rule = rule.ok_or(CompositionError::MissingRule)?;
            *grads.tensor_mut(&rule_matrix_name(rule))? += grad_w;
        }
        MatrixSource::PerRule(RuleMode::LowRank) => {
            let rule = rule.ok_or(CompositionError::MissingRule)?;
            let u = params.get(&rule_u_name(rule))?;
            let v = params.get(&rule_v_name(rule))?;
            *grads.tensor_mut(&rule_u_name(rule))? += grad_w * v.transpose();
            *grads.tensor_mut(&rule_v_name(rule))? += u.transpose() * grad_w;
            *grads.tensor_mut(W_C_COMMON)? += grad_w;
        }
    }
    Ok(())
}

/// `tanh(W x + b)`; returns `(pre_activation, output)`.
pub(crate) fn tanh_layer(
    w: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>), CompositionError> {
    check_dim(w.ncols(), x.len())?;
    let z = w * x + b;
    let p = z.map(f64::tanh);
    Ok((z, p))
}

pub(crate) fn concat(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(top.len() + bottom.len(), top.iter().chain(bottom.iter()).copied())
}

pub(crate) fn check_input_dim(dim: usize, v: &DVector<f64>) -> Result<(), CompositionError> {
    check_dim(dim, v.len())
}
