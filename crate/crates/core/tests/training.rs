use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sememe_sc::composition::{ComposerOptions, ComposerRegistry, GradientSet, ModelParams, MweInput, RuleMode};
use sememe_sc::embedding::{init_random, EmbeddingTable};
use sememe_sc::kb::CombinationRule;
use sememe_sc::training::checkpoint::{self, CheckpointMeta};
use sememe_sc::training::{
    backward, example_loss, grad_check, sgd_step, train, Example, GradCheckDims, Hyperparams, Objective, Target,
    Task,
};

const VARIANTS: [(&str, RuleMode); 9] = [
    ("add", RuleMode::LowRank),
    ("mul", RuleMode::LowRank),
    ("scas_s", RuleMode::LowRank),
    ("scas", RuleMode::LowRank),
    ("scmsa", RuleMode::LowRank),
    ("scas_r", RuleMode::Full),
    ("scas_r", RuleMode::LowRank),
    ("scmsa_r", RuleMode::Full),
    ("scmsa_r", RuleMode::LowRank),
];

fn options(mode: RuleMode, h_r: usize) -> ComposerOptions {
    ComposerOptions {
        rule_mode: mode,
        h_r,
        shared_attention: true,
    }
}

fn sememe_table(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingTable {
    let tokens: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
    let mut t = EmbeddingTable::from_rows(tokens, DMatrix::from_fn(n, d, |_, _| rng.random_range(-0.5..0.5))).unwrap();
    t.mark_all_trainable();
    t
}

fn random_example(rng: &mut ChaCha8Rng, d: usize, n: usize, task: Task, name: &str) -> Example {
    let pick = |rng: &mut ChaCha8Rng| {
        let k = rng.random_range(1..=3);
        rand::seq::index::sample(rng, n, k).into_vec()
    };
    let input = MweInput {
        w1: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
        w2: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
        sememes1: pick(rng),
        sememes2: pick(rng),
        rule: Some(CombinationRule::ALL[rng.random_range(0..4)]),
    };
    let target = match task {
        Task::Similarity => Target::Reference(DVector::from_fn(d, |_, _| rng.random_range(-0.8..0.8))),
        Task::Sememe => {
            let mut gold = vec![false; n];
            for s in pick(rng) {
                gold[s] = true;
            }
            Target::Sememes(gold)
        }
    };
    Example {
        name: name.to_owned(),
        input,
        target,
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let reg = ComposerRegistry::builtin();
    for (name, mode) in VARIANTS {
        let model = reg.build(name, &options(mode, 2)).unwrap();
        for task in Task::ALL {
            for seed in 0..3 {
                let err = grad_check(model.as_ref(), task, GradCheckDims::default(), seed).unwrap();
                assert!(err < 1e-4, "{} {task} seed {seed}: {err:e}", model.kind());
            }
        }
    }
    let unshared = reg
        .build(
            "scmsa",
            &ComposerOptions {
                shared_attention: false,
                ..Default::default()
            },
        )
        .unwrap();
    for task in Task::ALL {
        assert!(grad_check(unshared.as_ref(), task, GradCheckDims::default(), 4).unwrap() < 1e-4);
    }
}

#[test]
fn parameterless_similarity_check_is_vacuous() {
    let reg = ComposerRegistry::builtin();
    for name in ["add", "mul"] {
        let model = reg.build(name, &ComposerOptions::default()).unwrap();
        assert_eq!(grad_check(model.as_ref(), Task::Similarity, GradCheckDims::default(), 1).unwrap(), 0.0);
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_gradients() {
    let reg = ComposerRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = reg.build("scmsa_r", &options(RuleMode::LowRank, 2)).unwrap();
    let params = ModelParams::init(model.as_ref(), 4, sememe_table(&mut rng, 5, 4), 0);
    let mut ex = random_example(&mut rng, 4, 5, Task::Similarity, "x");
    let out = model.forward(&ex.input, &params).unwrap();
    ex.target = Target::Reference(out.p.clone());
    let g = backward(model.as_ref(), &params, &ex, &out, Objective { lambda: 0.0, k: 100.0 }).unwrap();
    assert!(g.is_zero());
}

#[test]
fn tied_classifier_row_gets_both_contributions() {
    // gold sememe 0 is also a constituent sememe: its gradient flows through
    // the classifier and through the aggregation path
    let reg = ComposerRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let model = reg.build("scas", &ComposerOptions::default()).unwrap();
    let mut params = ModelParams::init(model.as_ref(), 4, sememe_table(&mut rng, 5, 4), 0);
    let mut ex = random_example(&mut rng, 4, 5, Task::Sememe, "x");
    ex.input.sememes1 = vec![0, 2];
    let mut gold = vec![false; 5];
    gold[0] = true;
    ex.target = Target::Sememes(gold);
    let obj = Objective { lambda: 0.0, k: 100.0 };
    let out = model.forward(&ex.input, &params).unwrap();
    let g = backward(model.as_ref(), &params, &ex, &out, obj).unwrap();

    let mut classifier_only = GradientSet::zeros_like(&params);
    let scores = sememe_sc::training::predict_sememes(&out.p, params.sememes.matrix()).unwrap();
    classifier_only.add_scaled_sememe(0, -100.0 * (1.0 - scores[0]), &out.p);
    for j in 0..4 {
        let orig = params.sememes.matrix()[(0, j)];
        params.sememes.matrix_mut()[(0, j)] = orig + 1e-6;
        let up = example_loss(model.as_ref(), &params, &ex, obj).unwrap();
        params.sememes.matrix_mut()[(0, j)] = orig - 1e-6;
        let down = example_loss(model.as_ref(), &params, &ex, obj).unwrap();
        params.sememes.matrix_mut()[(0, j)] = orig;
        let numeric = (up - down) / 2e-6;
        let analytic = g.sememe_rows[&0][j];
        assert!((analytic - numeric).abs() <= 1e-5 * numeric.abs().max(1.0));
        // the composition path is not negligible
        assert!((analytic - classifier_only.sememe_rows[&0][j]).abs() > 1e-6);
    }
}

#[test]
fn sgd_step_descends_and_respects_frozen_rows() {
    let reg = ComposerRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for (name, mode) in VARIANTS {
        let model = reg.build(name, &options(mode, 2)).unwrap();
        for task in Task::ALL {
            let mut table = sememe_table(&mut rng, 6, 5);
            table.freeze_all();
            table.mark_trainable(&["s1", "s3"]).unwrap();
            let params = ModelParams::init(model.as_ref(), 5, table, 1);
            let ex = random_example(&mut rng, 5, 6, task, "x");
            let obj = Objective { lambda: 1e-4, k: 100.0 };
            let out = model.forward(&ex.input, &params).unwrap();
            let g = backward(model.as_ref(), &params, &ex, &out, obj).unwrap();

            let mut same = params.clone();
            sgd_step(&mut same, &g, 0.0);
            assert_eq!(same, params);

            let before = example_loss(model.as_ref(), &params, &ex, obj).unwrap();
            let mut next = params.clone();
            sgd_step(&mut next, &g, 1e-4);
            let after = example_loss(model.as_ref(), &next, &ex, obj).unwrap();
            if model.param_specs(5).is_empty() && task == Task::Similarity {
                // nothing trainable
                assert_eq!(after, before);
            } else {
                assert!(after < before, "{} {task}: {after} !< {before}", model.kind());
            }

            for i in [0, 2, 4, 5] {
                assert_eq!(next.sememes.row(i), params.sememes.row(i));
            }
        }
    }
}

#[test]
fn marked_sememe_row_is_the_only_one_updated() {
    let reg = ComposerRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let model = reg.build("scas", &ComposerOptions::default()).unwrap();
    let mut table = sememe_table(&mut rng, 4, 3);
    table.freeze_all();
    table.mark_trainable(&["s2"]).unwrap();
    let mut params = ModelParams::init(model.as_ref(), 3, table, 0);
    let mut ex = random_example(&mut rng, 3, 4, Task::Similarity, "x");
    ex.input.sememes1 = vec![0, 2];
    ex.input.sememes2 = vec![1, 3];
    let before = params.sememes.matrix().clone();
    let out = model.forward(&ex.input, &params).unwrap();
    let g = backward(model.as_ref(), &params, &ex, &out, Objective { lambda: 0.0, k: 1.0 }).unwrap();
    sgd_step(&mut params, &g, 0.1);
    for i in 0..4 {
        let changed = params.sememes.matrix().row(i) != before.row(i);
        assert_eq!(changed, i == 2, "row {i}");
    }
}

fn toy_sets(seed: u64, task: Task) -> (Vec<Example>, Vec<Example>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train: Vec<Example> = (0..12).map(|i| random_example(&mut rng, 4, 6, task, &format!("m{i}"))).collect();
    let valid: Vec<Example> = (0..3).map(|i| random_example(&mut rng, 4, 6, task, &format!("v{i}"))).collect();
    (train, valid)
}

#[test]
fn training_schedule_history_and_determinism() {
    let reg = ComposerRegistry::builtin();
    let model = reg.build("scmsa", &ComposerOptions::default()).unwrap();
    let (train_set, valid_set) = toy_sets(1, Task::Sememe);
    let hyper = Hyperparams {
        dim: 4,
        epochs: 7,
        seed: 3,
        ..Hyperparams::for_task(Task::Sememe)
    };
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = ModelParams::init(model.as_ref(), 4, sememe_table(&mut rng, 6, 4), 0);
        train(model.as_ref(), params, &train_set, &valid_set, &hyper).unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.history_csv(), b.history_csv());
    assert_eq!(a.history.len(), 7);
    assert_eq!(a.epoch, 7);
    assert_eq!(a.lr, 0.2 * 0.99f64.powi(7));
    for (n, r) in a.history.iter().enumerate() {
        assert_eq!(r.lr, 0.2 * 0.99f64.powi(n as i32));
        assert!(r.valid_loss.is_some());
    }
    let (best_epoch, _) = a.best.as_ref().unwrap();
    let best_valid = a.history[best_epoch - 1].valid_loss.unwrap();
    assert!(a.history.iter().all(|r| r.valid_loss.unwrap() >= best_valid));
    assert!(a.history_csv().starts_with("epoch,train_loss,valid_loss,lr\n1,"));
}

#[test]
fn training_rejects_bad_inputs() {
    let reg = ComposerRegistry::builtin();
    let model = reg.build("scas", &ComposerOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = ModelParams::init(model.as_ref(), 4, sememe_table(&mut rng, 6, 4), 0);
    let hyper = Hyperparams {
        dim: 4,
        epochs: 2,
        ..Hyperparams::for_task(Task::Similarity)
    };
    assert!(train(model.as_ref(), params.clone(), &[], &[], &hyper).is_err());
    let bad = Hyperparams { decay: 1.5, ..hyper.clone() };
    assert!(train(model.as_ref(), params.clone(), &toy_sets(0, Task::Similarity).0, &[], &bad).is_err());

    let (mut train_set, _) = toy_sets(0, Task::Similarity);
    train_set[4].target = Target::Reference(DVector::from_element(4, f64::NAN));
    let err = train(model.as_ref(), params, &train_set, &[], &hyper).unwrap_err();
    assert_eq!(
        err,
        sememe_sc::training::TrainError::NonFiniteLoss {
            epoch: 1,
            mwe: "m4".into()
        }
    );
}

#[test]
fn checkpoint_round_trip() {
    let reg = ComposerRegistry::builtin();
    let dir = std::env::temp_dir().join(format!("sememe-sc-ckpt-{}", std::process::id()));
    for (name, mode) in VARIANTS {
        let model = reg.build(name, &options(mode, 3)).unwrap();
        let tokens: Vec<String> = (0..5).map(|i| format!("sem{i}")).collect();
        let params = ModelParams::init(model.as_ref(), 4, init_random(&tokens, 4, 1, 0.3).unwrap(), 8);
        let meta = CheckpointMeta {
            model: name.into(),
            rule_mode: model.kind().rule_mode(),
            dim: 4,
            h_r: 3,
            shared_attention: true,
            task: Task::Sememe,
            epoch: 12,
            lr: 0.2 * 0.99f64.powi(12),
        };
        let sub = dir.join(name).join(mode.as_str());
        checkpoint::save(&sub, &meta, &params).unwrap();
        let (meta2, model2, params2) = checkpoint::load(&sub, &reg).unwrap();
        assert_eq!(meta2, meta);
        assert_eq!(model2.kind(), model.kind());
        assert_eq!(params2.tensors, params.tensors);
        assert_eq!(params2.sememes.matrix(), params.sememes.matrix());
        assert_eq!(params2.sememes.tokens(), params.sememes.tokens());
    }
    std::fs::remove_dir_all(&dir).ok();
}
