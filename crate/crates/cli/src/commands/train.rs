use anyhow::{anyhow, bail, Result};
use sememe_sc::composition::{ComposerRegistry, ModelParams};
use sememe_sc::training::checkpoint::{self, CheckpointMeta};
use sememe_sc::training::{build_examples, ExampleSource, Hyperparams, Task, TrainError};

use super::{composer_options, create_dir, out_dir, task, write, NumericalFailure};
use crate::config::RawConfig;
use crate::pipeline::{prepare, DataConfig};
use crate::runlog::RunLog;

fn hyperparams(raw: &RawConfig, task: Task, h_r: usize) -> Result<Hyperparams> {
    let d = Hyperparams::for_task(task);
    let hyper = Hyperparams {
        dim: raw.parsed_or("dim", d.dim)?,
        h_r,
        lambda: raw.parsed_or("lambda", d.lambda)?,
        k: raw.parsed_or("k", d.k)?,
        lr0: raw.parsed_or("lr0", d.lr0)?,
        decay: raw.parsed_or("decay", d.decay)?,
        epochs: raw.parsed_or("epochs", d.epochs)?,
        seed: raw.parsed_or("seed", d.seed)?,
        batch_size: raw.parsed_or("batch_size", d.batch_size)?,
    };
    hyper.validate()?;
    Ok(hyper)
}

pub fn train(raw: &RawConfig, log: &mut RunLog) -> Result<()> {
    let registry = ComposerRegistry::builtin();
    let out = out_dir(raw)?;
    let task = task(raw)?.ok_or_else(|| anyhow!("missing required config key `task`"))?;
    let model = raw
        .str("model")
        .ok_or_else(|| anyhow!("missing required config key `model`"))?;
    let options = composer_options(raw, Hyperparams::for_task(task).h_r)?;
    let composer = registry.build(model, &options)?;
    let mut hyper = hyperparams(raw, task, options.h_r)?;
    let tune_sememes = raw.bool_or("tune_sememes", task == Task::Sememe)?;
    let data = DataConfig::from_raw(raw)?;
    if task == Task::Similarity && data.references.is_none() {
        bail!("the similarity task needs `references` (pretrained MWE embeddings)");
    }

    let mut prep = prepare(&data, raw.parsed("dim")?, log)?;
    hyper.dim = prep.words.dim();
    if tune_sememes {
        prep.sememes.mark_all_trainable();
    }
    let splits = prep.splits().clone();
    let mut train_idx = prep.usable(&splits.train, task);
    let mut valid_idx = prep.usable(&splits.valid, task);
    let dropped = splits.train.len() + splits.valid.len() - train_idx.len() - valid_idx.len();
    if dropped > 0 {
        log.line(format!("skipping {dropped} unannotated MWEs"));
    }
    if task == Task::Similarity {
        let held_out = prep.evaluation_tokens();
        let before = train_idx.len() + valid_idx.len();
        let mut excluded = Vec::new();
        for idx in [&mut train_idx, &mut valid_idx] {
            idx.retain(|&i| {
                let t = prep.ds.mwes[i].token.as_str();
                let keep = !held_out.contains(t);
                if !keep {
                    excluded.push(t.to_owned());
                }
                keep
            });
        }
        if !excluded.is_empty() {
            excluded.sort();
            log.line(format!(
                "excluded {} of {before} MWEs that appear in similarity datasets: {}",
                excluded.len(),
                excluded.join(",")
            ));
        }
    }
    let source = ExampleSource {
        words: &prep.words,
        references: prep.references.as_ref(),
    };
    let train_set = build_examples(&prep.ds, &train_idx, source, task)?;
    let valid_set = build_examples(&prep.ds, &valid_idx, source, task)?;
    if train_set.is_empty() {
        bail!("no training examples left");
    }
    let params = ModelParams::init(composer.as_ref(), hyper.dim, prep.sememes.clone(), hyper.seed.wrapping_add(1));

    create_dir(&out)?;
    write(&out.join("config.txt"), &raw.snapshot())?;
    log.line(format!(
        "training {} on {task}: {} train, {} valid, d={}, {} epochs",
        composer.kind(),
        train_set.len(),
        valid_set.len(),
        hyper.dim,
        hyper.epochs
    ));
    let state = match sememe_sc::training::train(composer.as_ref(), params, &train_set, &valid_set, &hyper) {
        Ok(s) => s,
        Err(e @ TrainError::NonFiniteLoss { .. }) => {
            log.line(format!("aborted: {e}"));
            log.save(&out)?;
            return Err(NumericalFailure(e.to_string()).into());
        }
        Err(e) => return Err(e.into()),
    };
    write(&out.join("loss.csv"), &state.history_csv())?;

    let meta = |epoch: usize| CheckpointMeta {
        model: model.to_owned(),
        rule_mode: composer.kind().rule_mode(),
        dim: hyper.dim,
        h_r: options.h_r,
        shared_attention: options.shared_attention,
        task,
        epoch,
        lr: hyper.lr_at(epoch),
    };
    let ckpt = out.join("checkpoints");
    checkpoint::save(&ckpt.join("final"), &meta(state.epoch), &state.params)?;
    if let Some((epoch, best)) = &state.best {
        checkpoint::save(&ckpt.join("best"), &meta(*epoch), best)?;
        log.line(format!("best epoch {epoch}"));
    }
    let last = state.history.last().expect("at least one epoch");
    log.line(format!(
        "final train loss {}, valid loss {}",
        last.train_loss,
        super::opt(last.valid_loss)
    ));
    log.save(&out)
}
