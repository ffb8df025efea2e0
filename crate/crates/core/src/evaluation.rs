//! Similarity and sememe-prediction metrics.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use thiserror::Error;

use crate::composition::{Composer, CompositionError, ModelParams, MweInput};
use crate::kb::{partition_by_rule, partition_by_scd, CombinationRule, KbDataset, KbError, ScdLevel, SememeSet};
use crate::training::{predict_sememes, ExampleSource, TrainError};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cosine of a zero vector")]
    ZeroVector,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 observations, got {0}")]
    TooShort(usize),
    #[error("correlation undefined for a constant sequence")]
    Constant,
    #[error("empty gold sememe set for `{0}`")]
    EmptyGold(String),
    #[error("empty threshold grid")]
    EmptyGrid,
    #[error("no records")]
    NoRecords,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot compose: {}", .0.join(", "))]
    Uncomposable(Vec<String>),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

pub fn cosine(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64, EvalError> {
    if u.len() != v.len() {
        return Err(EvalError::LengthMismatch(u.len(), v.len()));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Err(EvalError::ZeroVector);
    }
    Ok((u.dot(v) / (nu * nv)).clamp(-1.0, 1.0))
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<(), EvalError> {
    if xs.len() != ys.len() {
        return Err(EvalError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(EvalError::TooShort(xs.len()));
    }
    Ok(())
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EvalError::Constant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the positions they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let mean = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = mean;
        }
        start = end;
    }
    ranks
}

pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, EvalError> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityPair {
    pub token1: String,
    pub token2: String,
    pub human_score: f64,
}

/// `token1<TAB>token2<TAB>score` lines; `#` comments and blank lines skipped.
pub fn parse_similarity(text: &str) -> Result<Vec<SimilarityPair>, EvalError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| EvalError::Parse { line: n + 1, msg };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let human_score: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| err(format!("bad score `{}`", fields[2])))?;
        if !human_score.is_finite() {
            return Err(err("score is not finite".into()));
        }
        out.push(SimilarityPair {
            token1: fields[0].to_owned(),
            token2: fields[1].to_owned(),
            human_score,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    /// Spearman correlation times 100.
    pub spearman: f64,
    pub pairs_used: usize,
    /// Pairs dropped because a token could not be composed.
    pub skipped: Vec<(String, String)>,
}

/// Composes both tokens of every pair, scores pairs by cosine and correlates
/// with the human scores. `resolve` maps a token to the model input; tokens
/// it cannot resolve fail the evaluation unless `allow_skip` is set.
pub fn evaluate_similarity<F>(
    composer: &dyn Composer,
    params: &ModelParams,
    pairs: &[SimilarityPair],
    resolve: F,
    allow_skip: bool,
) -> Result<SimilarityReport, EvalError>
where
    F: Fn(&str) -> Option<MweInput> + Sync,
{
    let compose = |token: &str| -> Result<Option<DVector<f64>>, EvalError> {
        match resolve(token) {
            Some(input) => Ok(Some(composer.forward(&input, params)?.p)),
            None => Ok(None),
        }
    };
    let scored: Vec<Result<Option<f64>, EvalError>> = pairs
        .par_iter()
        .map(|pair| match (compose(&pair.token1)?, compose(&pair.token2)?) {
            (Some(a), Some(b)) => Ok(Some(cosine(&a, &b)?)),
            _ => Ok(None),
        })
        .collect();
    let (mut model, mut human, mut skipped) = (Vec::new(), Vec::new(), Vec::new());
    for (pair, s) in pairs.iter().zip(scored) {
        match s? {
            Some(c) => {
                model.push(c);
                human.push(pair.human_score);
            }
            None => skipped.push((pair.token1.clone(), pair.token2.clone())),
        }
    }
    if !skipped.is_empty() && !allow_skip {
        return Err(EvalError::Uncomposable(
            skipped.iter().map(|(a, b)| format!("{a}/{b}")).collect(),
        ));
    }
    Ok(SimilarityReport {
        spearman: 100.0 * spearman(&model, &human)?,
        pairs_used: model.len(),
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub token: String,
    /// Position of the MWE in its dataset.
    pub mwe: usize,
    /// Scores indexed by inventory position.
    pub scores: Vec<f64>,
    /// Inventory positions by descending score, ties in inventory order.
    pub ranking: Vec<usize>,
    pub gold: SememeSet,
}

impl PredictionRecord {
    pub fn new(token: impl Into<String>, mwe: usize, scores: Vec<f64>, gold: SememeSet) -> Self {
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        Self {
            token: token.into(),
            mwe,
            scores,
            ranking,
            gold,
        }
    }
}

/// Scores every MWE in `indices` with the tied classifier, in parallel.
pub fn score_records(
    composer: &dyn Composer,
    params: &ModelParams,
    ds: &KbDataset,
    indices: &[usize],
    source: ExampleSource<'_>,
) -> Result<Vec<PredictionRecord>, EvalError> {
    let mut missing = Vec::new();
    let mut inputs = Vec::with_capacity(indices.len());
    for &i in indices {
        let m = &ds.mwes[i];
        if m.sememes.is_empty() {
            return Err(EvalError::EmptyGold(m.token.clone()));
        }
        match source.input(ds, i) {
            Ok(input) => inputs.push((i, input)),
            Err(gaps) => missing.extend(gaps),
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::Uncomposable(missing));
    }
    inputs
        .par_iter()
        .map(|(i, input)| {
            let m = &ds.mwes[*i];
            let p = composer.forward(input, params)?.p;
            let scores = predict_sememes(&p, params.sememes.matrix())?;
            Ok(PredictionRecord::new(
                m.token.clone(),
                *i,
                scores.iter().copied().collect(),
                m.sememes.clone(),
            ))
        })
        .collect()
}

pub fn average_precision(ranking: &[usize], gold: &SememeSet) -> Result<f64, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::EmptyGold(String::new()));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, s) in ranking.iter().enumerate() {
        if gold.contains(s) {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
            if hits == gold.len() {
                break;
            }
        }
    }
    Ok(sum / gold.len() as f64)
}

pub fn mean_average_precision(records: &[PredictionRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let mut total = 0.0;
    for r in records {
        total += average_precision(&r.ranking, &r.gold).map_err(|_| EvalError::EmptyGold(r.token.clone()))?;
    }
    Ok(total / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct F1Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Micro-averaged precision, recall and F1 with predictions `score > delta`.
pub fn f1_at_threshold(records: &[PredictionRecord], delta: f64) -> F1Scores {
    let (mut tp, mut predicted, mut positives) = (0usize, 0usize, 0usize);
    for r in records {
        positives += r.gold.len();
        for (i, &s) in r.scores.iter().enumerate() {
            if s > delta {
                predicted += 1;
                if r.gold.contains(&i) {
                    tp += 1;
                }
            }
        }
    }
    let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
    let recall = if positives == 0 { 0.0 } else { tp as f64 / positives as f64 };
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    F1Scores { precision, recall, f1 }
}

/// 0.05, 0.10, ..., 0.95.
pub fn default_delta_grid() -> Vec<f64> {
    (1..20).map(|i| i as f64 / 20.0).collect()
}

/// Grid value with the highest F1; ties go to the smaller threshold.
pub fn tune_delta(records: &[PredictionRecord], grid: &[f64]) -> Result<(f64, F1Scores), EvalError> {
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best: Option<(f64, F1Scores)> = None;
    for delta in sorted {
        let s = f1_at_threshold(records, delta);
        if best.is_none_or(|(_, b)| s.f1 > b.f1) {
            best = Some((delta, s));
        }
    }
    best.ok_or(EvalError::EmptyGrid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BucketRow {
    pub size: usize,
    pub map: f64,
    /// Mean SCD of annotated members (rule breakdown only).
    pub mean_scd: Option<f64>,
}

fn bucket_map(records: &[PredictionRecord], members: &[usize]) -> Result<f64, EvalError> {
    let by_mwe: BTreeMap<usize, &PredictionRecord> = records.iter().map(|r| (r.mwe, r)).collect();
    let chosen: Vec<PredictionRecord> = members.iter().map(|i| by_mwe[i].clone()).collect();
    mean_average_precision(&chosen)
}

fn record_mwes(records: &[PredictionRecord]) -> Vec<usize> {
    records.iter().map(|r| r.mwe).collect()
}

/// MAP per SCD level; levels with no records are absent.
pub fn breakdown_by_scd(
    ds: &KbDataset,
    records: &[PredictionRecord],
) -> Result<BTreeMap<ScdLevel, BucketRow>, EvalError> {
    let mut out = BTreeMap::new();
    for (level, members) in partition_by_scd(ds, &record_mwes(records))? {
        out.insert(
            level,
            BucketRow {
                size: members.len(),
                map: bucket_map(records, &members)?,
                mean_scd: None,
            },
        );
    }
    Ok(out)
}

/// MAP and mean SCD per combination rule; rules with no records are absent.
pub fn breakdown_by_rule(
    ds: &KbDataset,
    records: &[PredictionRecord],
) -> Result<BTreeMap<CombinationRule, BucketRow>, EvalError> {
    let mut out = BTreeMap::new();
    for (rule, bucket) in partition_by_rule(ds, &record_mwes(records)) {
        out.insert(
            rule,
            BucketRow {
                size: bucket.members.len(),
                map: bucket_map(records, &bucket.members)?,
                mean_scd: bucket.mean_scd,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> SememeSet {
        xs.iter().copied().collect()
    }

    #[test]
    fn cosine_basics() {
        let u = DVector::from_vec(vec![1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(cosine(&u, &v).unwrap(), 0.0);
        assert!((cosine(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&u, &DVector::zeros(2)), Err(EvalError::ZeroVector));
    }

    #[test]
    fn correlation_edge_cases() {
        let xs = [3.0, 1.0, 4.0, 1.5, 9.0];
        assert!((pearson(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((spearman(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let rev: Vec<f64> = sorted.iter().rev().copied().collect();
        assert!((spearman(&sorted, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(EvalError::Constant));
        assert_eq!(spearman(&[1.0], &[1.0]), Err(EvalError::TooShort(1)));
        assert_eq!(average_ranks(&[1.0, 2.0, 2.0, 4.0]), vec![1.0, 2.5, 2.5, 4.0]);
    }

    #[test]
    fn average_precision_cases() {
        assert_eq!(average_precision(&[2, 0, 1], &set(&[2])).unwrap(), 1.0);
        let ap = average_precision(&[4, 0, 3, 1, 2], &set(&[4, 3])).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert!((average_precision(&[0, 1, 2, 3], &set(&[3])).unwrap() - 0.25).abs() < 1e-15);
        assert!(average_precision(&[0], &set(&[])).is_err());
    }

    #[test]
    fn ranking_ties_follow_inventory_order() {
        let r = PredictionRecord::new("x", 0, vec![0.5, 0.9, 0.5, 0.1, 0.9], set(&[0]));
        assert_eq!(r.ranking, vec![1, 4, 0, 2, 3]);
    }

    #[test]
    fn threshold_extremes() {
        let recs = vec![
            PredictionRecord::new("a", 0, vec![0.2, 0.7, 0.4], set(&[1])),
            PredictionRecord::new("b", 1, vec![0.9, 0.3, 0.6], set(&[0, 2])),
        ];
        assert_eq!(f1_at_threshold(&recs, 0.0).recall, 1.0);
        assert_eq!(f1_at_threshold(&recs, 0.99), F1Scores::default());
        let (delta, best) = tune_delta(&recs, &default_delta_grid()).unwrap();
        // every delta in [0.4, 0.6) separates perfectly
        assert_eq!(best.f1, 1.0);
        assert_eq!(delta, 0.4);
        assert_eq!(tune_delta(&recs, &[]), Err(EvalError::EmptyGrid));
    }
}
