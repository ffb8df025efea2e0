use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sgd::{backward, example_loss};
use super::{Example, Objective, Target, Task, TrainError};
use crate::composition::{Composer, ModelParams, MweInput};
use crate::embedding::EmbeddingTable;
use crate::kb::CombinationRule;

const STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradCheckDims {
    pub dim: usize,
    pub n_sememes: usize,
}

impl Default for GradCheckDims {
    fn default() -> Self {
        Self { dim: 5, n_sememes: 6 }
    }
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn random_instance(
    composer: &dyn Composer,
    task: Task,
    dims: GradCheckDims,
    seed: u64,
) -> Result<(ModelParams, Example), TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, n) = (dims.dim, dims.n_sememes);
    let tokens = (0..n).map(|i| format!("s{i}")).collect();
    let mut sememes = EmbeddingTable::from_rows(tokens, DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0)))?;
    sememes.mark_all_trainable();
    let mut params = ModelParams::init(composer, d, sememes, rng.random());
    // move every tensor (biases included) off its special init values
    for t in params.tensors.values_mut() {
        t.value.iter_mut().for_each(|v| *v += rng.random_range(-0.3..0.3));
    }
    let subset = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(1..=3.min(n));
        rand::seq::index::sample(rng, n, k).into_vec()
    };
    let input = MweInput {
        w1: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
        w2: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
        sememes1: subset(&mut rng),
        sememes2: subset(&mut rng),
        rule: Some(CombinationRule::ALL[rng.random_range(0..4)]),
    };
    let target = match task {
        Task::Similarity => Target::Reference(DVector::from_fn(d, |_, _| rng.random_range(-0.9..0.9))),
        Task::Sememe => {
            let mut gold = vec![false; n];
            for s in subset(&mut rng) {
                gold[s] = true;
            }
            Target::Sememes(gold)
        }
    };
    Ok((
        params,
        Example {
            name: "gradcheck".into(),
            input,
            target,
        },
    ))
}

/// Largest relative disagreement between analytic gradients and central
/// differences over every model tensor entry and every sememe embedding
/// entry, on a random instance. The objective includes a non-zero penalty.
pub fn grad_check(
    composer: &dyn Composer,
    task: Task,
    dims: GradCheckDims,
    seed: u64,
) -> Result<f64, TrainError> {
    let (mut params, example) = random_instance(composer, task, dims, seed)?;
    let objective = Objective { lambda: 0.1, k: 100.0 };
    let out = composer.forward(&example.input, &params)?;
    let grads = backward(composer, &params, &example, &out, objective)?;

    let mut worst = 0.0f64;
    let names: Vec<String> = params.tensors.keys().cloned().collect();
    for name in &names {
        let len = params.get(name)?.len();
        for idx in 0..len {
            let orig = params.get(name)?[idx];
            params.get_mut(name)?[idx] = orig + STEP;
            let up = example_loss(composer, &params, &example, objective)?;
            params.get_mut(name)?[idx] = orig - STEP;
            let down = example_loss(composer, &params, &example, objective)?;
            params.get_mut(name)?[idx] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(grads.tensors[name][idx], numeric));
        }
    }
    for i in 0..dims.n_sememes {
        let analytic = grads.sememe_rows.get(&i);
        for j in 0..dims.dim {
            let orig = params.sememes.matrix()[(i, j)];
            params.sememes.matrix_mut()[(i, j)] = orig + STEP;
            let up = example_loss(composer, &params, &example, objective)?;
            params.sememes.matrix_mut()[(i, j)] = orig - STEP;
            let down = example_loss(composer, &params, &example, objective)?;
            params.sememes.matrix_mut()[(i, j)] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic.map_or(0.0, |g| g[j]), numeric));
        }
    }
    Ok(worst)
}
