use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use sememe_sc::composition::{Composer, ComposerRegistry, ModelParams};
use sememe_sc::evaluation::{
    breakdown_by_rule, breakdown_by_scd, default_delta_grid, evaluate_similarity, f1_at_threshold,
    mean_average_precision, score_records, tune_delta, PredictionRecord,
};
use sememe_sc::kb::KbDataset;
use sememe_sc::training::checkpoint::{self, CheckpointMeta};
use sememe_sc::training::{ExampleSource, Task};

use super::{create_dir, opt, out_dir, rule_mode, task, write};
use crate::config::RawConfig;
use crate::pipeline::{prepare, DataConfig, Prepared};
use crate::runlog::RunLog;

struct Loaded {
    meta: CheckpointMeta,
    composer: Box<dyn Composer>,
    params: ModelParams,
    prep: Prepared,
}

/// Loads the checkpoint and the data, checking that they belong together.
fn load(raw: &RawConfig, log: &mut RunLog) -> Result<Loaded> {
    let registry = ComposerRegistry::builtin();
    let dir = raw.required_input("checkpoint")?;
    let data = DataConfig::from_raw(raw)?;
    let (meta, composer, params) =
        checkpoint::load(&dir, &registry).with_context(|| format!("loading checkpoint {}", dir.display()))?;
    if let Some(model) = raw.str("model") {
        if model != meta.model {
            bail!("config model `{model}` does not match checkpoint model `{}`", meta.model);
        }
    }
    if let (Some(want), Some(have)) = (rule_mode(raw)?, meta.rule_mode) {
        if want != have {
            bail!("config rule_mode `{want}` does not match checkpoint rule_mode `{have}`");
        }
    }
    if let Some(t) = task(raw)? {
        if t != meta.task {
            bail!("config task `{t}` does not match checkpoint task `{}`", meta.task);
        }
    }
    let prep = prepare(&data, Some(meta.dim), log)?;
    if prep.ds.inventory.ids() != params.sememes.tokens() {
        bail!(
            "sememe inventory ({} sememes after filtering) differs from the checkpoint's ({} sememes)",
            prep.ds.inventory.len(),
            params.sememes.len()
        );
    }
    log.line(format!("checkpoint {}: {} epoch {}", dir.display(), composer.kind(), meta.epoch));
    Ok(Loaded {
        meta,
        composer,
        params,
        prep,
    })
}

pub fn eval_sim(raw: &RawConfig, log: &mut RunLog) -> Result<()> {
    let out = out_dir(raw)?;
    let allow_skip = raw.bool_or("allow_skip", false)?;
    let l = load(raw, log)?;
    if l.prep.similarity.is_empty() {
        bail!("no similarity datasets configured (`similarity`)");
    }
    let index: HashMap<&str, usize> = l
        .prep
        .ds
        .mwes
        .iter()
        .enumerate()
        .map(|(i, m)| (m.token.as_str(), i))
        .collect();
    let source = ExampleSource {
        words: &l.prep.words,
        references: None,
    };
    let resolve = |t: &str| index.get(t).and_then(|&i| source.input(&l.prep.ds, i).ok());

    let mut csv = String::from("dataset,model,spearman_x100,pairs_used,pairs_skipped\n");
    for (path, pairs) in &l.prep.similarity {
        let report = evaluate_similarity(l.composer.as_ref(), &l.params, pairs, resolve, allow_skip)
            .with_context(|| format!("evaluating {}", path.display()))?;
        let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        csv.push_str(&format!(
            "{name},{},{},{},{}\n",
            l.composer.kind(),
            report.spearman,
            report.pairs_used,
            report.skipped.len()
        ));
        log.line(format!("{name}: spearman x100 = {:.2} over {} pairs", report.spearman, report.pairs_used));
    }
    create_dir(&out)?;
    write(&out.join("config.txt"), &raw.snapshot())?;
    write(&out.join("similarity.csv"), &csv)?;
    log.save(&out)
}

/// `token<TAB>gold<TAB>ranking`, gold as comma-separated sememe ids and the
/// ranking as `id:score` items in rank order.
pub fn predictions_text(ds: &KbDataset, records: &[PredictionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let gold: Vec<&str> = r.gold.iter().map(|&s| ds.inventory.id(s)).collect();
        let ranked: Vec<String> = r
            .ranking
            .iter()
            .map(|&s| format!("{}:{}", ds.inventory.id(s), r.scores[s]))
            .collect();
        out.push_str(&format!("{}\t{}\t{}\n", r.token, gold.join(","), ranked.join(",")));
    }
    out
}

fn delta_grid(raw: &RawConfig) -> Result<Vec<f64>> {
    let items = raw.list("delta_grid");
    if items.is_empty() {
        return Ok(default_delta_grid());
    }
    items
        .iter()
        .map(|v| v.parse().map_err(|_| anyhow!("bad delta_grid value `{v}`")))
        .collect()
}

pub fn eval_sememe(raw: &RawConfig, log: &mut RunLog) -> Result<()> {
    let out = out_dir(raw)?;
    let grid = delta_grid(raw)?;
    let l = load(raw, log)?;
    if l.meta.task != Task::Sememe {
        log.line("note: checkpoint was trained for similarity; scoring with its sememe embeddings anyway");
    }
    let splits = l.prep.splits();
    let valid = l.prep.usable(&splits.valid, Task::Sememe);
    let test = l.prep.usable(&splits.test, Task::Sememe);
    if valid.is_empty() || test.is_empty() {
        bail!("need annotated MWEs in both the validation and test splits");
    }
    let source = ExampleSource {
        words: &l.prep.words,
        references: None,
    };
    let score = |idx: &[usize]| score_records(l.composer.as_ref(), &l.params, &l.prep.ds, idx, source);
    let valid_records = score(&valid)?;
    let test_records = score(&test)?;

    let (delta, _) = tune_delta(&valid_records, &grid)?;
    let f1 = f1_at_threshold(&test_records, delta);
    let map = mean_average_precision(&test_records)?;
    let by_scd = breakdown_by_scd(&l.prep.ds, &test_records)?;
    let by_rule = breakdown_by_rule(&l.prep.ds, &test_records)?;

    let kind = l.composer.kind();
    let summary = format!(
        "model,records,map_x100,f1_x100,precision_x100,recall_x100,delta\n{kind},{},{},{},{},{},{delta}\n",
        test_records.len(),
        100.0 * map,
        100.0 * f1.f1,
        100.0 * f1.precision,
        100.0 * f1.recall,
    );
    let mut scd_csv = String::from("scd,size,map_x100\n");
    for (level, row) in &by_scd {
        scd_csv.push_str(&format!("{level},{},{}\n", row.size, 100.0 * row.map));
    }
    let mut rule_csv = String::from("rule,size,map_x100,mean_scd\n");
    for (rule, row) in &by_rule {
        rule_csv.push_str(&format!("{rule},{},{},{}\n", row.size, 100.0 * row.map, opt(row.mean_scd)));
    }

    create_dir(&out)?;
    let files: [(&str, &str); 5] = [
        ("config.txt", &raw.snapshot()),
        ("sememe.csv", &summary),
        ("scd_breakdown.csv", &scd_csv),
        ("rule_breakdown.csv", &rule_csv),
        ("predictions.tsv", &predictions_text(&l.prep.ds, &test_records)),
    ];
    for (name, text) in files {
        write(&Path::new(&out).join(name), text)?;
    }
    log.line(format!(
        "test: MAP x100 = {:.2}, F1 x100 = {:.2} at delta {delta} (tuned on {} validation MWEs)",
        100.0 * map,
        100.0 * f1.f1,
        valid_records.len()
    ));
    log.save(&out)
}
