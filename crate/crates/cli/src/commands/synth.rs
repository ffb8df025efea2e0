use anyhow::{anyhow, Result};
use sememe_sc::composition::Composer;
use sememe_sc::synthetic::{generate, truth_composer, SyntheticConfig};
use sememe_sc::training::checkpoint::{self, CheckpointMeta};
use sememe_sc::training::Task;

use super::{create_dir, out_dir, write};
use crate::config::RawConfig;
use crate::runlog::RunLog;

fn synthetic_config(raw: &RawConfig) -> Result<SyntheticConfig> {
    let d = SyntheticConfig::default();
    let scd_mix = match raw.str("scd_mix") {
        None => d.scd_mix,
        Some(v) => {
            let w: Vec<f64> = raw
                .list("scd_mix")
                .iter()
                .map(|x| x.parse().map_err(|_| anyhow!("bad scd_mix weight `{x}`")))
                .collect::<Result<_>>()?;
            w.try_into()
                .map_err(|_| anyhow!("scd_mix needs 4 weights (levels 0..3), got `{v}`"))?
        }
    };
    Ok(SyntheticConfig {
        n_words: raw.parsed_or("n_words", d.n_words)?,
        n_sememes: raw.parsed_or("n_sememes", d.n_sememes)?,
        n_mwes: raw.parsed_or("n_mwes", d.n_mwes)?,
        dim: raw.parsed_or("dim", d.dim)?,
        seed: raw.parsed_or("seed", d.seed)?,
        noise: raw.parsed_or("noise", d.noise)?,
        scd_mix,
        n_pairs: raw.parsed_or("n_pairs", d.n_pairs)?,
    })
}

/// Ready-to-use settings for the generated files; paths are relative to the
/// output directory, where this file lives.
const DATA_CONFIG: &str = "\
lexicon = lexicon.tsv
mwes = mwes.tsv
embeddings = words.emb
sememe_embeddings = sememes.emb
references = references.emb
similarity = similarity.tsv
gold_scd = gold_scd.tsv
min_sememe_frequency = 1
";

pub fn gen_synthetic(raw: &RawConfig, log: &mut RunLog) -> Result<()> {
    let out = out_dir(raw)?;
    let cfg = synthetic_config(raw)?;
    let data = generate(&cfg)?;

    create_dir(&out)?;
    let ds = &data.dataset;
    let files = [
        ("lexicon.tsv", ds.lexicon_text()),
        ("mwes.tsv", ds.mwe_text()),
        ("words.emb", data.words.to_text()),
        ("sememes.emb", data.sememes.to_text()),
        ("references.emb", data.references.to_text()),
        ("similarity.tsv", data.pairs_text()),
        ("gold_scd.tsv", data.gold_scd_text()),
        ("data.conf", format!("{DATA_CONFIG}dim = {}\n", cfg.dim)),
        ("config.txt", raw.snapshot()),
    ];
    for (name, text) in &files {
        write(&out.join(name), text)?;
    }
    let meta = CheckpointMeta {
        model: truth_composer().kind().name().to_owned(),
        rule_mode: None,
        dim: cfg.dim,
        h_r: 1,
        shared_attention: true,
        task: Task::Similarity,
        epoch: 0,
        lr: 0.0,
    };
    checkpoint::save(&out.join("truth"), &meta, &data.truth)?;
    let mut counts = [0usize; 4];
    for l in &data.gold_scd {
        counts[l.value() as usize] += 1;
    }
    log.line(format!(
        "generated {} words, {} sememes, {} MWEs (SCD 0/1/2/3: {}/{}/{}/{}), {} similarity pairs in {}",
        cfg.n_words,
        cfg.n_sememes,
        cfg.n_mwes,
        counts[0],
        counts[1],
        counts[2],
        counts[3],
        cfg.n_pairs,
        out.display()
    ));
    log.save(&out)
}
