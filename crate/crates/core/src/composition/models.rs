use nalgebra::DVector;

use super::ops::{
    aggregate_sememes, attend, attend_backward, check_input_dim, compose_add, compose_mul,
    composition_matrix, composition_matrix_backward, concat, tanh_layer, Attention, MatrixSource,
};
use super::params::{
    rule_matrix_name, rule_u_name, rule_v_name, GradientSet, ModelParams, ParamSpec, B_A, B_A2,
    B_C, W_A, W_A2, W_C, W_C_COMMON,
};
use super::{Cache, ComposedOutput, Composer, CompositionError, ModelKind, MweInput, RuleMode};
use crate::kb::CombinationRule;

#[derive(Debug, Clone, Copy, Default)]
pub struct Additive;

impl Composer for Additive {
    fn kind(&self) -> ModelKind {
        ModelKind::Add
    }

    fn param_specs(&self, _dim: usize) -> Vec<ParamSpec> {
        Vec::new()
    }

    fn forward(&self, input: &MweInput, _params: &ModelParams) -> Result<ComposedOutput, CompositionError> {
        Ok(ComposedOutput {
            p: compose_add(&input.w1, &input.w2)?,
            cache: None,
        })
    }

    fn backward(
        &self,
        _input: &MweInput,
        _params: &ModelParams,
        _out: &ComposedOutput,
        _grad_p: &DVector<f64>,
        _grads: &mut GradientSet,
    ) -> Result<(), CompositionError> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Multiplicative;

impl Composer for Multiplicative {
    fn kind(&self) -> ModelKind {
        ModelKind::Mul
    }

    fn param_specs(&self, _dim: usize) -> Vec<ParamSpec> {
        Vec::new()
    }

    fn forward(&self, input: &MweInput, _params: &ModelParams) -> Result<ComposedOutput, CompositionError> {
        Ok(ComposedOutput {
            p: compose_mul(&input.w1, &input.w2)?,
            cache: None,
        })
    }

    fn backward(
        &self,
        _input: &MweInput,
        _params: &ModelParams,
        _out: &ComposedOutput,
        _grad_p: &DVector<f64>,
        _grads: &mut GradientSet,
    ) -> Result<(), CompositionError> {
        Ok(())
    }
}

fn matrix_specs(source: MatrixSource, dim: usize, h_r: usize) -> Vec<ParamSpec> {
    match source {
        MatrixSource::Shared => vec![ParamSpec::weight(W_C, dim, 2 * dim)],
        MatrixSource::PerRule(RuleMode::Full) => CombinationRule::ALL
            .iter()
            .map(|&r| ParamSpec::weight(rule_matrix_name(r), dim, 2 * dim))
            .collect(),
        MatrixSource::PerRule(RuleMode::LowRank) => {
            let mut specs = vec![ParamSpec::weight(W_C_COMMON, dim, 2 * dim)];
            for r in CombinationRule::ALL {
                specs.push(ParamSpec::weight(rule_u_name(r), dim, h_r));
                specs.push(ParamSpec::weight(rule_v_name(r), h_r, 2 * dim));
            }
            specs
        }
    }
}

/// Backward through `p = tanh(W x + b_c)`; returns dL/dx.
fn tanh_head_backward(
    source: MatrixSource,
    input: &MweInput,
    params: &ModelParams,
    out: &ComposedOutput,
    grad_p: &DVector<f64>,
    grads: &mut GradientSet,
) -> Result<DVector<f64>, CompositionError> {
    let cache = out.cache.as_ref().ok_or(CompositionError::MissingCache)?;
    let grad_z = grad_p.component_mul(&out.p.map(|p| 1.0 - p * p));
    let w = composition_matrix(source, input.rule, params)?;
    let grad_w = &grad_z * cache.input.transpose();
    composition_matrix_backward(source, input.rule, params, &grad_w, grads)?;
    *grads.tensor_mut(B_C)? += &grad_z;
    Ok(w.transpose() * grad_z)
}

fn check_rule(source: MatrixSource, input: &MweInput) -> Result<(), CompositionError> {
    if matches!(source, MatrixSource::PerRule(_)) && input.rule.is_none() {
        return Err(CompositionError::MissingRule);
    }
    Ok(())
}

/// Sememe-free ablation: `p = tanh(W_c [w1; w2] + b_c)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConcatTanh;

impl Composer for ConcatTanh {
    fn kind(&self) -> ModelKind {
        ModelKind::ScasS
    }

    fn param_specs(&self, dim: usize) -> Vec<ParamSpec> {
        let mut specs = matrix_specs(MatrixSource::Shared, dim, 0);
        specs.push(ParamSpec::bias(B_C, dim));
        specs
    }

    fn forward(&self, input: &MweInput, params: &ModelParams) -> Result<ComposedOutput, CompositionError> {
        check_input_dim(params.dim, &input.w1)?;
        check_input_dim(params.dim, &input.w2)?;
        let x = concat(&input.w1, &input.w2);
        let (z, p) = tanh_layer(params.get(W_C)?, &params.vector(B_C)?, &x)?;
        Ok(ComposedOutput {
            p,
            cache: Some(Cache::new(x, z)),
        })
    }

    fn backward(
        &self,
        input: &MweInput,
        params: &ModelParams,
        out: &ComposedOutput,
        grad_p: &DVector<f64>,
        grads: &mut GradientSet,
    ) -> Result<(), CompositionError> {
        // the input gradient lands on frozen word embeddings
        tanh_head_backward(MatrixSource::Shared, input, params, out, grad_p, grads)?;
        Ok(())
    }
}

/// Aggregated-sememe model: `p = tanh(W [w1 + w2; w1' + w2'] + b_c)` with
/// `w'` the plain sum of a constituent's sememe embeddings.
#[derive(Debug, Clone, Copy)]
pub struct AggregatedSememe {
    pub matrix: MatrixSource,
    pub h_r: usize,
}

impl Composer for AggregatedSememe {
    fn kind(&self) -> ModelKind {
        match self.matrix {
            MatrixSource::Shared => ModelKind::Scas,
            MatrixSource::PerRule(mode) => ModelKind::ScasR(mode),
        }
    }

    fn uses_sememes(&self) -> bool {
        true
    }

    fn param_specs(&self, dim: usize) -> Vec<ParamSpec> {
        let mut specs = matrix_specs(self.matrix, dim, self.h_r);
        specs.push(ParamSpec::bias(B_C, dim));
        specs
    }

    fn forward(&self, input: &MweInput, params: &ModelParams) -> Result<ComposedOutput, CompositionError> {
        check_input_dim(params.dim, &input.w1)?;
        check_input_dim(params.dim, &input.w2)?;
        check_rule(self.matrix, input)?;
        let agg1 = aggregate_sememes(&input.sememes1, &params.sememes)?;
        let agg2 = aggregate_sememes(&input.sememes2, &params.sememes)?;
        let x = concat(&(&input.w1 + &input.w2), &(&agg1 + &agg2));
        let w = composition_matrix(self.matrix, input.rule, params)?;
        let (z, p) = tanh_layer(&w, &params.vector(B_C)?, &x)?;
        let mut cache = Cache::new(x, z);
        cache.aggregate1 = Some(agg1);
        cache.aggregate2 = Some(agg2);
        Ok(ComposedOutput { p, cache: Some(cache) })
    }

    fn backward(
        &self,
        input: &MweInput,
        params: &ModelParams,
        out: &ComposedOutput,
        grad_p: &DVector<f64>,
        grads: &mut GradientSet,
    ) -> Result<(), CompositionError> {
        let grad_x = tanh_head_backward(self.matrix, input, params, out, grad_p, grads)?;
        let grad_agg = grad_x.rows(params.dim, params.dim).into_owned();
        for &s in input.sememes1.iter().chain(&input.sememes2) {
            grads.add_to_sememe(s, &grad_agg);
        }
        Ok(())
    }
}

/// Mutual-attention model: the query built from `w1` weights the sememes
/// of `w2` and vice versa, then the same tanh head as the aggregated model.
#[derive(Debug, Clone, Copy)]
pub struct MutualAttention {
    pub matrix: MatrixSource,
    pub h_r: usize,
    /// One `(W_a, b_a)` pair for both directions when true.
    pub shared_attention: bool,
}

impl MutualAttention {
    fn second_direction(&self) -> (&'static str, &'static str) {
        if self.shared_attention {
            (W_A, B_A)
        } else {
            (W_A2, B_A2)
        }
    }
}

impl Composer for MutualAttention {
    fn kind(&self) -> ModelKind {
        match self.matrix {
            MatrixSource::Shared => ModelKind::Scmsa,
            MatrixSource::PerRule(mode) => ModelKind::ScmsaR(mode),
        }
    }

    fn uses_sememes(&self) -> bool {
        true
    }

    fn shared_attention(&self) -> Option<bool> {
        Some(self.shared_attention)
    }

    fn param_specs(&self, dim: usize) -> Vec<ParamSpec> {
        let mut specs = matrix_specs(self.matrix, dim, self.h_r);
        specs.push(ParamSpec::bias(B_C, dim));
        specs.push(ParamSpec::weight(W_A, dim, dim));
        specs.push(ParamSpec::bias(B_A, dim));
        if !self.shared_attention {
            specs.push(ParamSpec::weight(W_A2, dim, dim));
            specs.push(ParamSpec::bias(B_A2, dim));
        }
        specs
    }

    fn forward(&self, input: &MweInput, params: &ModelParams) -> Result<ComposedOutput, CompositionError> {
        check_input_dim(params.dim, &input.w1)?;
        check_input_dim(params.dim, &input.w2)?;
        check_rule(self.matrix, input)?;
        let (w2_name, b2_name) = self.second_direction();
        // w2' from the query on w1; w1' from the query on w2
        let att2 = attend(
            &input.w1,
            &input.sememes2,
            params.get(W_A)?,
            &params.vector(B_A)?,
            &params.sememes,
        )?;
        let att1 = attend(
            &input.w2,
            &input.sememes1,
            params.get(w2_name)?,
            &params.vector(b2_name)?,
            &params.sememes,
        )?;
        let x = concat(&(&input.w1 + &input.w2), &(&att1.pooled + &att2.pooled));
        let w = composition_matrix(self.matrix, input.rule, params)?;
        let (z, p) = tanh_layer(&w, &params.vector(B_C)?, &x)?;
        let mut cache = Cache::new(x, z);
        cache.aggregate1 = Some(att1.pooled.clone());
        cache.aggregate2 = Some(att2.pooled.clone());
        cache.attention1 = Some(att1);
        cache.attention2 = Some(att2);
        Ok(ComposedOutput { p, cache: Some(cache) })
    }

    fn backward(
        &self,
        input: &MweInput,
        params: &ModelParams,
        out: &ComposedOutput,
        grad_p: &DVector<f64>,
        grads: &mut GradientSet,
    ) -> Result<(), CompositionError> {
        let grad_x = tanh_head_backward(self.matrix, input, params, out, grad_p, grads)?;
        let grad_pooled = grad_x.rows(params.dim, params.dim).into_owned();
        let cache = out.cache.as_ref().ok_or(CompositionError::MissingCache)?;
        let (att1, att2): (&Attention, &Attention) = match (&cache.attention1, &cache.attention2) {
            (Some(a1), Some(a2)) => (a1, a2),
            _ => return Err(CompositionError::MissingCache),
        };

        let grad_u1 = attend_backward(att2, &input.sememes2, &params.sememes, &grad_pooled, grads);
        *grads.tensor_mut(W_A)? += &grad_u1 * input.w1.transpose();
        *grads.tensor_mut(B_A)? += &grad_u1;

        let (w2_name, b2_name) = self.second_direction();
        let grad_u2 = attend_backward(att1, &input.sememes1, &params.sememes, &grad_pooled, grads);
        *grads.tensor_mut(w2_name)? += &grad_u2 * input.w2.transpose();
        *grads.tensor_mut(b2_name)? += &grad_u2;
        Ok(())
    }
}
