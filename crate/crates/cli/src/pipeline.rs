//! Shared data loading for the train and eval commands.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use sememe_sc::embedding::{assemble, load_embeddings, EmbeddingTable};
use sememe_sc::evaluation::{parse_similarity, SimilarityPair};
use sememe_sc::kb::{filter_sememes, parse_kb, split_dataset, KbDataset, Splits};
use sememe_sc::training::Task;

use crate::config::{parse_ratios, RawConfig};
use crate::runlog::RunLog;

pub const DEFAULT_MIN_FREQUENCY: usize = 5;
pub const DEFAULT_INIT_SCALE: f64 = 0.01;

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Validated data settings.
#[derive(Debug, Clone)]
pub struct DataConfig {
    pub lexicon: PathBuf,
    pub mwes: PathBuf,
    pub embeddings: PathBuf,
    pub sememe_embeddings: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub similarity: Vec<PathBuf>,
    pub min_frequency: usize,
    pub split: (u32, u32, u32),
    pub seed: u64,
    pub init_scale: f64,
}

impl DataConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let min_frequency = raw.parsed_or("min_sememe_frequency", DEFAULT_MIN_FREQUENCY)?;
        if min_frequency == 0 {
            bail!("`min_sememe_frequency` must be at least 1");
        }
        let init_scale = raw.parsed_or("init_scale", DEFAULT_INIT_SCALE)?;
        if !(init_scale > 0.0 && init_scale.is_finite()) {
            bail!("`init_scale` must be positive");
        }
        let split = parse_ratios(raw.str("split").unwrap_or("8:1:1"))?;
        if split.0 == 0 || split.1 == 0 || split.2 == 0 {
            bail!("split ratios must be positive");
        }
        Ok(Self {
            lexicon: raw.required_input("lexicon")?,
            mwes: raw.required_input("mwes")?,
            embeddings: raw.required_input("embeddings")?,
            sememe_embeddings: raw.input_path("sememe_embeddings")?,
            references: raw.input_path("references")?,
            similarity: raw.input_paths("similarity")?,
            min_frequency,
            split,
            seed: raw.parsed_or("seed", 0)?,
            init_scale,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    /// Filtered dataset with splits.
    pub ds: KbDataset,
    pub words: EmbeddingTable,
    /// Sememe embeddings in inventory order; rows absent from the pretrained
    /// file are random and trainable.
    pub sememes: EmbeddingTable,
    pub references: Option<EmbeddingTable>,
    pub similarity: Vec<(PathBuf, Vec<SimilarityPair>)>,
}

impl Prepared {
    pub fn splits(&self) -> &Splits {
        self.ds.splits.as_ref().expect("prepared datasets are split")
    }

    /// Split indices usable for `task`: the sememe task needs annotations.
    pub fn usable(&self, indices: &[usize], task: Task) -> Vec<usize> {
        indices
            .iter()
            .copied()
            .filter(|&i| task == Task::Similarity || !self.ds.mwes[i].sememes.is_empty())
            .collect()
    }

    /// MWE tokens named in any similarity dataset.
    pub fn evaluation_tokens(&self) -> BTreeSet<&str> {
        self.similarity
            .iter()
            .flat_map(|(_, pairs)| pairs.iter().flat_map(|p| [p.token1.as_str(), p.token2.as_str()]))
            .collect()
    }
}

/// Parses, filters and splits the KB and loads every embedding file.
/// `dim`, when given, must agree with the word embedding file.
pub fn prepare(cfg: &DataConfig, dim: Option<usize>, log: &mut RunLog) -> Result<Prepared> {
    let raw = parse_kb(&read(&cfg.lexicon)?, &read(&cfg.mwes)?).context("parsing the knowledge base")?;
    let ds = filter_sememes(&raw, cfg.min_frequency)?;
    log.line(format!(
        "kb: {} words, {} MWEs, {} sememes; after filtering at {}: {} words, {} MWEs, {} sememes",
        raw.lexicon.len(),
        raw.mwes.len(),
        raw.inventory.len(),
        cfg.min_frequency,
        ds.lexicon.len(),
        ds.mwes.len(),
        ds.inventory.len()
    ));
    if ds.inventory.is_empty() {
        bail!("no sememes survive min_sememe_frequency = {}", cfg.min_frequency);
    }
    let ds = split_dataset(&ds, cfg.split, cfg.seed)?;
    let s = ds.splits.as_ref().expect("just split");
    log.line(format!("split: train {}, valid {}, test {}", s.train.len(), s.valid.len(), s.test.len()));

    let words = load_embeddings(&read(&cfg.embeddings)?, dim)
        .with_context(|| format!("loading {}", cfg.embeddings.display()))?;
    let dim = words.dim();
    let pretrained = match &cfg.sememe_embeddings {
        Some(p) => Some(load_embeddings(&read(p)?, Some(dim)).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let (mut sememes, missing_sememes) =
        assemble(ds.inventory.ids(), pretrained.as_ref(), dim, cfg.seed, cfg.init_scale)?;
    sememes.freeze_all();
    sememes.mark_trainable(&missing_sememes)?;
    if !missing_sememes.is_empty() {
        log.line(format!(
            "{} sememes have no pretrained embedding and start random: {}",
            missing_sememes.len(),
            missing_sememes.join(",")
        ));
    }
    let references = match &cfg.references {
        Some(p) => Some(load_embeddings(&read(p)?, Some(dim)).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let mut similarity = Vec::new();
    for p in &cfg.similarity {
        let pairs = parse_similarity(&read(p)?).with_context(|| format!("parsing {}", p.display()))?;
        similarity.push((p.clone(), pairs));
    }
    Ok(Prepared {
        ds,
        words,
        sememes,
        references,
        similarity,
    })
}
