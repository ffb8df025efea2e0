use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sememe_sc::composition::{ComposerOptions, ComposerRegistry, ModelParams, MweInput};
use sememe_sc::embedding::EmbeddingTable;
use sememe_sc::evaluation::{
    average_precision, breakdown_by_rule, breakdown_by_scd, cosine, default_delta_grid, evaluate_similarity,
    f1_at_threshold, mean_average_precision, parse_similarity, pearson, spearman, tune_delta, EvalError,
    PredictionRecord, SimilarityPair,
};
use sememe_sc::kb::{parse_kb, CombinationRule, ScdLevel};

fn oracle_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

/// rank = (#smaller) + (#equal + 1) / 2
fn oracle_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_ranking(scores: &[f64]) -> Vec<usize> {
    let mut left: Vec<usize> = (0..scores.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for k in 1..left.len() {
            if scores[left[k]] > scores[left[best]] {
                best = k;
            }
        }
        out.push(left.remove(best));
    }
    out
}

fn oracle_ap(scores: &[f64], gold: &BTreeSet<usize>) -> f64 {
    let ranking = oracle_ranking(scores);
    let mut total = 0.0;
    for g in gold {
        let k = ranking.iter().position(|s| s == g).unwrap() + 1;
        let hits = ranking[..k].iter().filter(|s| gold.contains(s)).count();
        total += hits as f64 / k as f64;
    }
    total / gold.len() as f64
}

fn oracle_f1(records: &[(Vec<f64>, BTreeSet<usize>)], delta: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (scores, gold) in records {
        for (i, s) in scores.iter().enumerate() {
            match (*s > delta, gold.contains(&i)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
    (p, r, f)
}

/// Scores drawn from a small grid so ties are common.
fn random_records(rng: &mut ChaCha8Rng, n: usize, n_sememes: usize) -> Vec<(Vec<f64>, BTreeSet<usize>)> {
    (0..n)
        .map(|_| {
            let scores: Vec<f64> = (0..n_sememes).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
            let k = rng.random_range(1..=3);
            let gold = rand::seq::index::sample(rng, n_sememes, k).into_iter().collect();
            (scores, gold)
        })
        .collect()
}

fn to_records(raw: &[(Vec<f64>, BTreeSet<usize>)]) -> Vec<PredictionRecord> {
    raw.iter()
        .enumerate()
        .map(|(i, (s, g))| PredictionRecord::new(format!("m{i}"), i, s.clone(), g.clone()))
        .collect()
}

#[test]
fn correlations_match_oracles_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(3..12);
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        if xs.iter().all(|x| *x == xs[0]) {
            continue;
        }
        assert!((pearson(&xs, &ys).unwrap() - oracle_pearson(&xs, &ys)).abs() < 1e-10);
        let want = oracle_pearson(&oracle_ranks(&xs), &oracle_ranks(&ys));
        assert!((spearman(&xs, &ys).unwrap() - want).abs() < 1e-10);
    }
}

#[test]
fn spearman_with_hand_ranked_ties() {
    let xs = [1.0, 2.0, 2.0, 4.0];
    let ys = [10.0, 20.0, 30.0, 40.0];
    let want = oracle_pearson(&[1.0, 2.5, 2.5, 4.0], &[1.0, 2.0, 3.0, 4.0]);
    assert!((spearman(&xs, &ys).unwrap() - want).abs() < 1e-12);
}

#[test]
fn ranking_metrics_match_oracles_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (n, n_sememes) = (rng.random_range(1..6), rng.random_range(3..9));
        let raw = random_records(&mut rng, n, n_sememes);
        let records = to_records(&raw);
        let mut total = 0.0;
        for (r, (scores, gold)) in records.iter().zip(&raw) {
            assert_eq!(r.ranking, oracle_ranking(scores));
            let ap = oracle_ap(scores, gold);
            assert!((average_precision(&r.ranking, gold).unwrap() - ap).abs() < 1e-12);
            total += ap;
        }
        assert!((mean_average_precision(&records).unwrap() - total / raw.len() as f64).abs() < 1e-12);
        for delta in default_delta_grid() {
            let got = f1_at_threshold(&records, delta);
            let (p, r, f) = oracle_f1(&raw, delta);
            assert!((got.precision - p).abs() < 1e-12);
            assert!((got.recall - r).abs() < 1e-12);
            assert!((got.f1 - f).abs() < 1e-12);
        }
    }
}

#[test]
fn f1_on_hand_set_records() {
    let raw = vec![
        (vec![0.92, 0.15, 0.48, 0.73], [0, 3].into_iter().collect()),
        (vec![0.33, 0.61, 0.07, 0.58], [1].into_iter().collect()),
        (vec![0.81, 0.22, 0.64, 0.12], [2, 1].into_iter().collect()),
    ];
    let records = to_records(&raw);
    // delta 0.5: predicted {0,3} {1,3} {0,2}; tp = 2 + 1 + 1, fp = 2, fn = 1
    let s = f1_at_threshold(&records, 0.5);
    assert_eq!((s.precision, s.recall), (4.0 / 6.0, 4.0 / 5.0));
    assert!((s.f1 - 8.0 / 11.0).abs() < 1e-15);
    let (delta, best) = tune_delta(&records, &default_delta_grid()).unwrap();
    for d in default_delta_grid() {
        let f = f1_at_threshold(&records, d).f1;
        assert!(best.f1 >= f);
        if d < delta {
            assert!(f < best.f1);
        }
    }
}

#[test]
fn cosine_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let u = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let dot: f64 = (0..6).map(|i| u[i] * v[i]).sum();
    let want = dot / ((0..6).map(|i| u[i] * u[i]).sum::<f64>().sqrt() * (0..6).map(|i| v[i] * v[i]).sum::<f64>().sqrt());
    assert!((cosine(&u, &v).unwrap() - want).abs() < 1e-12);
    assert_eq!(cosine(&u, &v).unwrap(), cosine(&v, &u).unwrap());
}

proptest! {
    #[test]
    fn spearman_ignores_monotone_transforms(xs in prop::collection::vec(-5.0f64..5.0, 3..15), seed in any::<u64>()) {
        prop_assume!(xs.iter().any(|x| *x != xs[0]));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ys: Vec<f64> = xs.iter().map(|x| x + rng.random_range(-3.0..3.0)).collect();
        let base = spearman(&xs, &ys).unwrap();
        let cubed: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
        prop_assert!((spearman(&cubed, &ys).unwrap() - base).abs() < 1e-12);
        let exp: Vec<f64> = ys.iter().map(|y| y.exp()).collect();
        prop_assert!((spearman(&xs, &exp).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn pearson_ignores_positive_affine_maps(
        xs in prop::collection::vec(-5.0f64..5.0, 3..15),
        a in 0.1f64..10.0,
        b in -10.0f64..10.0,
    ) {
        prop_assume!(xs.iter().any(|x| (*x - xs[0]).abs() > 1e-3));
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x.sin() + i as f64 * 0.1).collect();
        let mapped: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
        prop_assert!((pearson(&mapped, &ys).unwrap() - pearson(&xs, &ys).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn ap_bounds_and_perfect_ranking(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = random_records(&mut rng, 1, 8);
        let (scores, gold) = &raw[0];
        let r = PredictionRecord::new("x", 0, scores.clone(), gold.clone());
        let ap = average_precision(&r.ranking, gold).unwrap();
        prop_assert!(ap > 0.0 && ap <= 1.0);
        let top: BTreeSet<usize> = r.ranking[..gold.len()].iter().copied().collect();
        prop_assert_eq!(ap == 1.0, &top == gold);
    }

    #[test]
    fn map_ignores_record_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut records = to_records(&random_records(&mut rng, 6, 7));
        let before = mean_average_precision(&records).unwrap();
        records.reverse();
        records.swap(0, 3);
        prop_assert!((mean_average_precision(&records).unwrap() - before).abs() < 1e-12);
    }

    #[test]
    fn tuned_delta_is_best_on_its_grid(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records = to_records(&random_records(&mut rng, 5, 6));
        let grid = default_delta_grid();
        let (_, best) = tune_delta(&records, &grid).unwrap();
        for d in grid {
            prop_assert!(best.f1 >= f1_at_threshold(&records, d).f1);
        }
    }
}

#[test]
fn breakdowns_match_per_bucket_oracles() {
    let ds = parse_kb(
        "a\tx,y\nb\ty,z\nc\tq\nd\tx,q\n",
        "ab\ta\tb\tN_N\tx,y,z\n\
         ac\ta\tc\tADJ_N\tx\n\
         cd\tc\td\tN_N\tw\n\
         bd\tb\td\tV_N\tz,w\n\
         ad\ta\td\tADJ_N\tx,y,q\n",
    )
    .unwrap();
    let n = ds.inventory.len();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let records: Vec<PredictionRecord> = (0..5)
        .map(|i| {
            let scores = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            PredictionRecord::new(ds.mwes[i].token.clone(), i, scores, ds.mwes[i].sememes.clone())
        })
        .collect();
    let ap: Vec<f64> = records
        .iter()
        .map(|r| oracle_ap(&r.scores, &r.gold))
        .collect();

    // ab 3, ac 2, cd 0, bd 1, ad 3
    let by_scd = breakdown_by_scd(&ds, &records).unwrap();
    assert_eq!(by_scd.len(), 4);
    assert_eq!(by_scd[&ScdLevel::Three].size, 2);
    assert!((by_scd[&ScdLevel::Three].map - (ap[0] + ap[4]) / 2.0).abs() < 1e-12);
    assert!((by_scd[&ScdLevel::Zero].map - ap[2]).abs() < 1e-12);

    let by_rule = breakdown_by_rule(&ds, &records).unwrap();
    assert!(!by_rule.contains_key(&CombinationRule::Other));
    let adj = &by_rule[&CombinationRule::AdjN];
    assert_eq!(adj.size, 2);
    assert!((adj.map - (ap[1] + ap[4]) / 2.0).abs() < 1e-12);
    assert_eq!(adj.mean_scd, Some(2.5));
    assert_eq!(by_rule[&CombinationRule::NN].mean_scd, Some(1.5));

    // one bucket holding everything reproduces the overall MAP
    let same_rule = parse_kb("a\tx\nb\ty\n", "ab\ta\tb\tN_N\tx\nba\tb\ta\tN_N\tx,y\n").unwrap();
    let recs = vec![
        PredictionRecord::new("ab", 0, vec![0.2, 0.9], [0].into_iter().collect()),
        PredictionRecord::new("ba", 1, vec![0.6, 0.1], [0, 1].into_iter().collect()),
    ];
    let rows = breakdown_by_rule(&same_rule, &recs).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[&CombinationRule::NN].map, mean_average_precision(&recs).unwrap());
}

#[test]
fn similarity_protocol() {
    let reg = ComposerRegistry::builtin();
    let add = reg.build("add", &ComposerOptions::default()).unwrap();
    let sememes = EmbeddingTable::from_rows(vec!["s".into()], DMatrix::from_element(1, 2, 0.1)).unwrap();
    let params = ModelParams::init(add.as_ref(), 2, sememes, 0);
    let vecs = [("a", [1.0, 0.0]), ("b", [0.9, 0.1]), ("c", [0.0, 1.0]), ("d", [-1.0, 0.2])];
    let resolve = |t: &str| {
        vecs.iter().find(|(n, _)| *n == t).map(|(_, v)| MweInput {
            w1: DVector::from_row_slice(v) * 0.5,
            w2: DVector::from_row_slice(v) * 0.5,
            sememes1: vec![0],
            sememes2: vec![0],
            rule: Some(CombinationRule::NN),
        })
    };
    let pair = |a: &str, b: &str, s: f64| SimilarityPair {
        token1: a.into(),
        token2: b.into(),
        human_score: s,
    };
    let pairs = vec![pair("a", "b", 9.0), pair("a", "c", 3.0), pair("a", "d", 0.5)];
    let report = evaluate_similarity(add.as_ref(), &params, &pairs, resolve, false).unwrap();
    assert_eq!(report.spearman, 100.0);

    let with_unknown = [pairs.clone(), vec![pair("a", "zz", 1.0)]].concat();
    assert!(matches!(
        evaluate_similarity(add.as_ref(), &params, &with_unknown, resolve, false),
        Err(EvalError::Uncomposable(_))
    ));
    let report = evaluate_similarity(add.as_ref(), &params, &with_unknown, resolve, true).unwrap();
    assert_eq!(report.pairs_used, 3);
    assert_eq!(report.skipped, vec![("a".to_owned(), "zz".to_owned())]);

    // every MWE composed to the same vector: constant model scores
    let flat = |_: &str| resolve("a");
    assert_eq!(
        evaluate_similarity(add.as_ref(), &params, &pairs, flat, false),
        Err(EvalError::Constant)
    );
}

#[test]
fn similarity_file_parsing() {
    let pairs = parse_similarity("# header\nab\tcd\t3.5\n\nef\tgh\t-1\n").unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[1].human_score, -1.0);
    assert!(matches!(parse_similarity("ab\tcd\n"), Err(EvalError::Parse { line: 1, .. })));
    assert!(matches!(parse_similarity("ab\tcd\tnan\n"), Err(EvalError::Parse { .. })));
}
