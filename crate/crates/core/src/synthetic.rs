//! Synthetic sememe knowledge bases with a hidden ground-truth composer.
//!
//! Reference MWE embeddings come from an aggregated-sememe model with known
//! parameters, so they depend on the constituents' sememe embeddings by
//! construction.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use thiserror::Error;

use crate::composition::params::{B_C, W_C};
use crate::composition::{AggregatedSememe, Composer, MatrixSource, ModelParams, MweInput};
use crate::embedding::EmbeddingTable;
use crate::evaluation::{cosine, SimilarityPair};
use crate::kb::{compute_scd, parse_kb, CombinationRule, KbDataset, LexEntry, MweEntry, ScdLevel, SememeInventory, SememeSet};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("bad SCD mixture: weights must be non-negative with a positive sum")]
    BadMixture,
    #[error("noise must be finite and non-negative")]
    BadNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub n_words: usize,
    pub n_sememes: usize,
    pub n_mwes: usize,
    pub dim: usize,
    pub seed: u64,
    /// Standard deviation of Gaussian noise added to reference embeddings.
    pub noise: f64,
    /// Relative frequencies of SCD levels 0, 1, 2, 3.
    pub scd_mix: [f64; 4],
    /// Number of similarity pairs to emit.
    pub n_pairs: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_words: 200,
            n_sememes: 50,
            n_mwes: 300,
            dim: 20,
            seed: 0,
            noise: 0.0,
            scd_mix: [0.25; 4],
            n_pairs: 30,
        }
    }
}

pub const MAX_WORD_SEMEMES: usize = 6;

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: KbDataset,
    pub words: EmbeddingTable,
    pub sememes: EmbeddingTable,
    pub references: EmbeddingTable,
    pub pairs: Vec<SimilarityPair>,
    /// Realized SCD of every MWE, in dataset order.
    pub gold_scd: Vec<ScdLevel>,
    /// Parameters of the hidden composer (shared composition matrix).
    pub truth: ModelParams,
}

impl SyntheticData {
    /// `token<TAB>scd` lines.
    pub fn gold_scd_text(&self) -> String {
        self.dataset
            .mwes
            .iter()
            .zip(&self.gold_scd)
            .map(|(m, l)| format!("{}\t{}\n", m.token, l))
            .collect()
    }

    pub fn pairs_text(&self) -> String {
        self.pairs
            .iter()
            .map(|p| format!("{}\t{}\t{}\n", p.token1, p.token2, p.human_score))
            .collect()
    }
}

/// The hidden composer family.
pub fn truth_composer() -> AggregatedSememe {
    AggregatedSememe {
        matrix: MatrixSource::Shared,
        h_r: 1,
    }
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, half_width: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-half_width..half_width))
}

fn random_subset(rng: &mut ChaCha8Rng, pool: &[usize], lo: usize, hi: usize) -> SememeSet {
    let k = rng.random_range(lo..=hi);
    sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect()
}

/// Gold set realizing `level` against the constituents' union, if possible.
fn realize(rng: &mut ChaCha8Rng, level: ScdLevel, union: &SememeSet, n_sememes: usize) -> Option<SememeSet> {
    let inside: Vec<usize> = union.iter().copied().collect();
    let outside: Vec<usize> = (0..n_sememes).filter(|s| !union.contains(s)).collect();
    match level {
        ScdLevel::Three => Some(union.clone()),
        ScdLevel::Two if inside.len() >= 2 => Some(random_subset(rng, &inside, 1, inside.len() - 1)),
        ScdLevel::One if !outside.is_empty() => {
            let mut s = random_subset(rng, &inside, 1, inside.len().min(3));
            s.extend(random_subset(rng, &outside, 1, outside.len().min(2)));
            Some(s)
        }
        ScdLevel::Zero if !outside.is_empty() => Some(random_subset(rng, &outside, 1, outside.len().min(3))),
        _ => None,
    }
}

fn validate(cfg: &SyntheticConfig) -> Result<(), SyntheticError> {
    for (name, v) in [
        ("n_words", cfg.n_words),
        ("n_sememes", cfg.n_sememes),
        ("n_mwes", cfg.n_mwes),
        ("dim", cfg.dim),
    ] {
        if v == 0 {
            return Err(SyntheticError::NonPositive(name));
        }
    }
    if !(cfg.noise.is_finite() && cfg.noise >= 0.0) {
        return Err(SyntheticError::BadNoise);
    }
    if cfg.scd_mix.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || cfg.scd_mix.iter().sum::<f64>() <= 0.0 {
        return Err(SyntheticError::BadMixture);
    }
    if cfg.n_words < 2 {
        return Err(SyntheticError::Infeasible("need at least 2 words".into()));
    }
    let max_pairs = cfg.n_words * (cfg.n_words - 1);
    if cfg.n_mwes > max_pairs {
        return Err(SyntheticError::Infeasible(format!(
            "{} MWEs requested but only {max_pairs} ordered word pairs exist",
            cfg.n_mwes
        )));
    }
    let needs_outside = cfg.scd_mix[0] > 0.0 || cfg.scd_mix[1] > 0.0;
    if needs_outside && cfg.n_sememes <= 2 * MAX_WORD_SEMEMES.min(cfg.n_sememes) {
        return Err(SyntheticError::Infeasible(format!(
            "SCD levels 0 and 1 need more than {} sememes",
            2 * MAX_WORD_SEMEMES.min(cfg.n_sememes)
        )));
    }
    if cfg.scd_mix[2] > 0.0 && cfg.n_sememes < 2 {
        return Err(SyntheticError::Infeasible("SCD level 2 needs at least 2 sememes".into()));
    }
    if cfg.n_pairs > 0 && cfg.n_mwes < 2 {
        return Err(SyntheticError::Infeasible("similarity pairs need at least 2 MWEs".into()));
    }
    Ok(())
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData, SyntheticError> {
    validate(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.dim;

    let mut inventory = SememeInventory::new();
    for s in 0..cfg.n_sememes {
        inventory.intern(&format!("sem{s}"));
    }
    let all: Vec<usize> = (0..cfg.n_sememes).collect();
    let mut lexicon = indexmap::IndexMap::new();
    let word_tokens: Vec<String> = (0..cfg.n_words).map(|w| format!("w{w}")).collect();
    for token in &word_tokens {
        let sememes = random_subset(&mut rng, &all, 1, MAX_WORD_SEMEMES.min(cfg.n_sememes));
        lexicon.insert(
            token.clone(),
            LexEntry {
                token: token.clone(),
                sememes,
            },
        );
    }

    // entries with variance 1/d so vectors have roughly unit norm
    let half = (3.0 / d as f64).sqrt();
    let words = EmbeddingTable::from_rows(word_tokens.clone(), uniform_matrix(&mut rng, cfg.n_words, d, half))
        .expect("generated tokens are unique");
    let sememe_tokens = inventory.ids().to_vec();
    let mut sememes = EmbeddingTable::from_rows(sememe_tokens, uniform_matrix(&mut rng, cfg.n_sememes, d, half))
        .expect("generated tokens are unique");
    sememes.mark_all_trainable();

    let composer = truth_composer();
    let mut truth = ModelParams::init(&composer, d, sememes.clone(), rng.random());
    *truth.get_mut(W_C).expect("shared matrix") = uniform_matrix(&mut rng, d, 2 * d, 1.5 * (1.5 / d as f64).sqrt());
    *truth.get_mut(B_C).expect("bias") = uniform_matrix(&mut rng, d, 1, 0.1);

    let classes = WeightedIndex::new(cfg.scd_mix).map_err(|_| SyntheticError::BadMixture)?;
    let noise = Normal::new(0.0, cfg.noise).map_err(|_| SyntheticError::BadNoise)?;
    let mut used = BTreeSet::new();
    let mut mwes = Vec::with_capacity(cfg.n_mwes);
    let mut gold_scd = Vec::with_capacity(cfg.n_mwes);
    let attempts = 1000 + 50 * cfg.n_words * cfg.n_words;
    while mwes.len() < cfg.n_mwes {
        let level = ScdLevel::ALL[classes.sample(&mut rng)];
        let mut placed = false;
        for _ in 0..attempts {
            let (a, b) = (rng.random_range(0..cfg.n_words), rng.random_range(0..cfg.n_words));
            if a == b || used.contains(&(a, b)) {
                continue;
            }
            let (s1, s2) = (&lexicon[a].sememes, &lexicon[b].sememes);
            let union: SememeSet = s1.union(s2).copied().collect();
            let Some(gold) = realize(&mut rng, level, &union, cfg.n_sememes) else {
                continue;
            };
            debug_assert_eq!(compute_scd(&gold, s1, s2), Ok(level));
            used.insert((a, b));
            mwes.push(MweEntry {
                token: format!("{}_{}", word_tokens[a], word_tokens[b]),
                constituent1: word_tokens[a].clone(),
                constituent2: word_tokens[b].clone(),
                rule: CombinationRule::ALL[rng.random_range(0..4)],
                sememes: gold,
            });
            gold_scd.push(level);
            placed = true;
            break;
        }
        if !placed {
            return Err(SyntheticError::Infeasible(format!(
                "could not place an MWE with SCD {level} after {attempts} attempts"
            )));
        }
    }


    let built = KbDataset {
        inventory,
        lexicon,
        mwes,
        splits: None,
    };
    // positions as a reader of the written files assigns them; sememes no
    // word or MWE uses are dropped
    let dataset = parse_kb(&built.lexicon_text(), &built.mwe_text()).expect("generated KB parses");
    let reorder = |table: &EmbeddingTable| {
        let ids = dataset.inventory.ids();
        let m = DMatrix::from_fn(ids.len(), d, |i, j| table.matrix()[(built.inventory.get(&ids[i]).unwrap(), j)]);
        let mut t = EmbeddingTable::from_rows(ids.to_vec(), m).expect("inventory ids are unique");
        t.mark_all_trainable();
        t
    };
    let sememes = reorder(&sememes);
    truth.sememes = reorder(&truth.sememes);

    let mut reference_rows = Vec::with_capacity(cfg.n_mwes);
    for m in &dataset.mwes {
        let (s1, s2) = dataset.constituent_sememes(m);
        let input = MweInput {
            w1: words.lookup(&m.constituent1).expect("generated word"),
            w2: words.lookup(&m.constituent2).expect("generated word"),
            sememes1: s1.iter().copied().collect(),
            sememes2: s2.iter().copied().collect(),
            rule: None,
        };
        let p = composer
            .forward(&input, &truth)
            .expect("truth parameters match the composer")
            .p;
        reference_rows.push(p.map(|v| v + noise.sample(&mut rng)));
    }
    let mwe_tokens: Vec<String> = dataset.mwes.iter().map(|m| m.token.clone()).collect();
    let references = EmbeddingTable::from_rows(
        mwe_tokens.clone(),
        DMatrix::from_fn(cfg.n_mwes, d, |i, j| reference_rows[i][j]),
    )
    .expect("MWE tokens are unique");

    let mut pairs = Vec::with_capacity(cfg.n_pairs);
    for _ in 0..cfg.n_pairs {
        let pick = sample(&mut rng, cfg.n_mwes, 2).into_vec();
        let (a, b): (DVector<f64>, DVector<f64>) = (references.row(pick[0]), references.row(pick[1]));
        pairs.push(SimilarityPair {
            token1: mwe_tokens[pick[0]].clone(),
            token2: mwe_tokens[pick[1]].clone(),
            human_score: cosine(&a, &b).unwrap_or(0.0),
        });
    }

    Ok(SyntheticData {
        dataset,
        words,
        sememes,
        references,
        pairs,
        gold_scd,
        truth,
    })
}
