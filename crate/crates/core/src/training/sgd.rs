use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{loss_sememe, loss_sememe_logit_grad, loss_similarity, loss_similarity_grad, predict_sememes};
use super::{Example, Hyperparams, Objective, Target, TrainError};
use crate::composition::{ComposedOutput, Composer, GradientSet, ModelParams, ParamRole};

/// Task loss of one example, without the penalty.
pub(crate) fn task_loss(p: &DVector<f64>, target: &Target, params: &ModelParams, k: f64) -> Result<f64, TrainError> {
    match target {
        Target::Reference(p_r) => loss_similarity(p, p_r),
        Target::Sememes(gold) => loss_sememe(&predict_sememes(p, params.sememes.matrix())?, gold, k),
    }
}

/// Task loss plus `(objective.lambda / 2) * ||Theta||^2`.
pub fn example_loss(
    composer: &dyn Composer,
    params: &ModelParams,
    example: &Example,
    objective: Objective,
) -> Result<f64, TrainError> {
    let out = composer.forward(&example.input, params)?;
    Ok(task_loss(&out.p, &example.target, params, objective.k)?
        + 0.5 * objective.lambda * params.weight_sq_norm())
}

/// Adds the gradient of the example objective into `grads`.
fn accumulate(
    composer: &dyn Composer,
    params: &ModelParams,
    example: &Example,
    out: &ComposedOutput,
    objective: Objective,
    grads: &mut GradientSet,
) -> Result<(), TrainError> {
    let grad_p = match &example.target {
        Target::Reference(p_r) => {
            if p_r.len() != out.p.len() {
                return Err(TrainError::DimensionMismatch {
                    expected: out.p.len(),
                    found: p_r.len(),
                });
            }
            loss_similarity_grad(&out.p, p_r)
        }
        Target::Sememes(gold) => {
            let w_s = params.sememes.matrix();
            let scores = predict_sememes(&out.p, w_s)?;
            if gold.len() != scores.len() {
                return Err(TrainError::DimensionMismatch {
                    expected: scores.len(),
                    found: gold.len(),
                });
            }
            let g = loss_sememe_logit_grad(&scores, gold, objective.k);
            // classifier path: d(s_i . p)/ds_i = p
            for (i, &gi) in g.iter().enumerate() {
                if gi != 0.0 {
                    grads.add_scaled_sememe(i, gi, &out.p);
                }
            }
            w_s.transpose() * g
        }
    };
    composer.backward(&example.input, params, out, &grad_p, grads)?;
    if objective.lambda != 0.0 {
        for (name, t) in &params.tensors {
            if t.role == ParamRole::Weight {
                *grads.tensor_mut(name)? += &t.value * objective.lambda;
            }
        }
    }
    Ok(())
}

/// Exact gradient of one example's objective with respect to every
/// parameter tensor and every sememe row (sememe rows receive the sum of the
/// composition-path and classifier-path contributions).
pub fn backward(
    composer: &dyn Composer,
    params: &ModelParams,
    example: &Example,
    out: &ComposedOutput,
    objective: Objective,
) -> Result<GradientSet, TrainError> {
    let mut grads = GradientSet::zeros_like(params);
    accumulate(composer, params, example, out, objective, &mut grads)?;
    Ok(grads)
}

/// `theta <- theta - lr * grad` on every tensor and on trainable sememe rows.
pub fn sgd_step(params: &mut ModelParams, grads: &GradientSet, lr: f64) {
    for (name, g) in &grads.tensors {
        if let Some(t) = params.tensors.get_mut(name) {
            t.value.zip_apply(g, |v, gv| *v -= lr * gv);
        }
    }
    for (&i, g) in &grads.sememe_rows {
        if params.sememes.is_trainable(i) {
            let mut row = params.sememes.row(i);
            row.axpy(-lr, g, 1.0);
            params.sememes.set_row(i, &row);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based count of completed epochs.
    pub epoch: usize,
    /// Mean task loss over the training set after the epoch.
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    /// Learning rate used during the epoch.
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub params: ModelParams,
    /// Completed epochs.
    pub epoch: usize,
    /// Learning rate for the next epoch: `lr0 * decay^epoch`.
    pub lr: f64,
    pub history: Vec<EpochRecord>,
    /// Epoch and parameters with the lowest validation loss so far.
    pub best: Option<(usize, ModelParams)>,
}

impl TrainState {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,valid_loss,lr\n");
        for r in &self.history {
            let valid = r.valid_loss.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.epoch, r.train_loss, valid, r.lr));
        }
        out
    }
}

pub(crate) fn mean_task_loss(
    composer: &dyn Composer,
    params: &ModelParams,
    examples: &[Example],
    k: f64,
) -> Result<Option<f64>, TrainError> {
    if examples.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for ex in examples {
        let out = composer.forward(&ex.input, params)?;
        total += task_loss(&out.p, &ex.target, params, k)?;
    }
    Ok(Some(total / examples.len() as f64))
}

/// Per-example SGD over shuffled training examples, decaying the learning
/// rate once per epoch.
///
/// The penalty is spread evenly over the training examples so one epoch
/// optimizes `sum_p L_p + (lambda / 2) ||Theta||^2`.
pub fn train(
    composer: &dyn Composer,
    params: ModelParams,
    train_set: &[Example],
    valid_set: &[Example],
    hyper: &Hyperparams,
) -> Result<TrainState, TrainError> {
    hyper.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::NoExamples);
    }
    let objective = Objective {
        lambda: hyper.lambda / train_set.len() as f64,
        k: hyper.k,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut state = TrainState {
        params,
        epoch: 0,
        lr: hyper.lr0,
        history: Vec::with_capacity(hyper.epochs),
        best: None,
    };
    let mut best_valid = f64::INFINITY;

    for epoch in 0..hyper.epochs {
        let lr = hyper.lr_at(epoch);
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let mut grads = GradientSet::zeros_like(&state.params);
            for &i in batch {
                let ex = &train_set[i];
                let out = composer.forward(&ex.input, &state.params)?;
                let loss = task_loss(&out.p, &ex.target, &state.params, hyper.k)?;
                if !loss.is_finite() {
                    return Err(TrainError::NonFiniteLoss {
                        epoch: epoch + 1,
                        mwe: ex.name.clone(),
                    });
                }
                accumulate(composer, &state.params, ex, &out, objective, &mut grads)?;
            }
            sgd_step(&mut state.params, &grads, lr);
        }

        state.epoch = epoch + 1;
        state.lr = hyper.lr_at(state.epoch);
        let train_loss = mean_task_loss(composer, &state.params, train_set, hyper.k)?.unwrap_or(0.0);
        if !train_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: state.epoch,
                mwe: "<training set>".into(),
            });
        }
        let valid_loss = mean_task_loss(composer, &state.params, valid_set, hyper.k)?;
        let score = valid_loss.unwrap_or(train_loss);
        if score < best_valid {
            best_valid = score;
            state.best = Some((state.epoch, state.params.clone()));
        }
        state.history.push(EpochRecord {
            epoch: state.epoch,
            train_loss,
            valid_loss,
            lr,
        });
    }
    Ok(state)
}
