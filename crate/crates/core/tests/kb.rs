use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sememe_sc::kb::{
    compute_scd, filter_sememes, parse_kb, partition_by_rule, partition_by_scd, split_dataset, CombinationRule,
    KbDataset, ScdLevel,
};

fn small_set() -> impl Strategy<Value = BTreeSet<u8>> {
    prop::collection::btree_set(0u8..10, 1..6)
}

/// Random KB text: `n_words` words over `n_sememes` sememes and `n_mwes`
/// MWEs, a few of them unannotated.
fn random_kb_text(seed: u64, n_words: usize, n_sememes: usize, n_mwes: usize) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| {
        let k = rng.random_range(lo..=hi);
        let mut s: Vec<usize> = rand::seq::index::sample(rng, n_sememes, k).into_vec();
        s.sort_unstable();
        s.iter().map(|i| format!("sem{i}")).collect::<Vec<_>>().join(",")
    };
    let mut lex = String::from("# words\n");
    for w in 0..n_words {
        lex.push_str(&format!("w{w}\t{}\n", pick(&mut rng, 1, 4)));
    }
    let mut mwe = String::new();
    for m in 0..n_mwes {
        let a = rng.random_range(0..n_words);
        let b = rng.random_range(0..n_words);
        let rule = CombinationRule::ALL[rng.random_range(0..4)];
        let gold = if rng.random_bool(0.1) { String::new() } else { pick(&mut rng, 1, 5) };
        mwe.push_str(&format!("m{m}\tw{a}\tw{b}\t{rule}\t{gold}\n"));
    }
    (lex, mwe)
}

fn named(ds: &KbDataset, set: &BTreeSet<usize>) -> BTreeSet<String> {
    set.iter().map(|&i| ds.inventory.id(i).to_owned()).collect()
}

proptest! {
    #[test]
    fn exactly_one_scd_condition_holds(p in small_set(), a in small_set(), b in small_set()) {
        let union: BTreeSet<u8> = a.union(&b).copied().collect();
        let conditions = [
            p.is_disjoint(&union),
            !p.is_disjoint(&union) && !p.is_subset(&union),
            p.is_subset(&union) && p != union,
            p == union,
        ];
        prop_assert_eq!(conditions.iter().filter(|&&c| c).count(), 1);
        let level = compute_scd(&p, &a, &b).unwrap();
        prop_assert!(conditions[level.value() as usize]);
    }

    #[test]
    fn scd_ignores_constituent_order(p in small_set(), a in small_set(), b in small_set()) {
        prop_assert_eq!(compute_scd(&p, &a, &b).unwrap(), compute_scd(&p, &b, &a).unwrap());
    }

    #[test]
    fn serialization_round_trips(seed in any::<u64>()) {
        let (lex, mwe) = random_kb_text(seed, 15, 12, 25);
        let ds = parse_kb(&lex, &mwe).unwrap();
        let again = parse_kb(&ds.lexicon_text(), &ds.mwe_text()).unwrap();
        prop_assert_eq!(&again, &ds);
    }

    #[test]
    fn filtering_is_idempotent(seed in any::<u64>(), threshold in 1usize..5) {
        let (lex, mwe) = random_kb_text(seed, 20, 30, 30);
        let once = filter_sememes(&parse_kb(&lex, &mwe).unwrap(), threshold).unwrap();
        let twice = filter_sememes(&once, threshold).unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn splits_partition_all_mwes(seed in any::<u64>(), n in 3usize..60) {
        let (lex, mwe) = random_kb_text(seed, 10, 8, n);
        let ds = split_dataset(&parse_kb(&lex, &mwe).unwrap(), (8, 1, 1), seed).unwrap();
        let s = ds.splits.unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.valid).chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(!s.valid.is_empty() && !s.test.is_empty() && !s.train.is_empty());
    }
}

#[test]
fn filter_matches_brute_force_count() {
    let (lex, mwe) = random_kb_text(77, 20, 30, 30);
    let ds = parse_kb(&lex, &mwe).unwrap();
    let filtered = filter_sememes(&ds, 3).unwrap();

    // recount from the raw fields, removing emptied words and their MWEs
    // until the surviving set is stable
    let lex_rows: Vec<(&str, Vec<&str>)> = lex
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let (w, f) = l.split_once('\t').unwrap();
            (w, f.split(',').collect())
        })
        .collect();
    let mwe_rows: Vec<Vec<&str>> = mwe.lines().map(|l| l.split('\t').collect()).collect();
    let mut keep: BTreeSet<&str> = lex_rows.iter().flat_map(|(_, f)| f.iter().copied()).collect();
    loop {
        let live_words: BTreeSet<&str> = lex_rows
            .iter()
            .filter(|(_, f)| f.iter().any(|s| keep.contains(s)))
            .map(|(w, _)| *w)
            .collect();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (w, f) in &lex_rows {
            if live_words.contains(w) {
                for s in f {
                    *counts.entry(s).or_default() += 1;
                }
            }
        }
        for row in &mwe_rows {
            if live_words.contains(row[1]) && live_words.contains(row[2]) && !row[4].is_empty() {
                for s in row[4].split(',') {
                    *counts.entry(s).or_default() += 1;
                }
            }
        }
        let next: BTreeSet<&str> = counts.into_iter().filter(|&(_, c)| c >= 3).map(|(s, _)| s).collect();
        if next == keep {
            break;
        }
        keep = next;
    }
    let expected: Vec<&String> = ds.inventory.ids().iter().filter(|id| keep.contains(id.as_str())).collect();
    assert!(expected.len() < ds.inventory.len(), "fixture should drop something");
    assert_eq!(filtered.inventory.ids().iter().collect::<Vec<_>>(), expected);

    for (token, entry) in &ds.lexicon {
        let survivors: BTreeSet<String> =
            named(&ds, &entry.sememes).into_iter().filter(|s| keep.contains(s.as_str())).collect();
        match filtered.lexicon.get(token) {
            Some(e) => assert_eq!(named(&filtered, &e.sememes), survivors),
            None => assert!(survivors.is_empty()),
        }
    }
    let kept_mwes: Vec<&str> = ds
        .mwes
        .iter()
        .filter(|m| filtered.lexicon.contains_key(&m.constituent1) && filtered.lexicon.contains_key(&m.constituent2))
        .map(|m| m.token.as_str())
        .collect();
    assert_eq!(filtered.mwes.iter().map(|m| m.token.as_str()).collect::<Vec<_>>(), kept_mwes);
    for m in &filtered.mwes {
        let before = &ds.mwes[ds.mwe_index(&m.token).unwrap()];
        let survivors: BTreeSet<String> =
            named(&ds, &before.sememes).into_iter().filter(|s| keep.contains(s.as_str())).collect();
        assert_eq!(named(&filtered, &m.sememes), survivors);
    }
}

#[test]
fn filter_threshold_one_is_identity() {
    let (lex, mwe) = random_kb_text(5, 12, 10, 20);
    let ds = parse_kb(&lex, &mwe).unwrap();
    assert_eq!(filter_sememes(&ds, 1).unwrap(), ds);
}

#[test]
fn filter_drops_rare_sememe() {
    let ds = parse_kb("a\tx,y\nb\tx\nc\tx,z\n", "ab\ta\tb\tN_N\tx\n").unwrap();
    let f = filter_sememes(&ds, 2).unwrap();
    assert_eq!(f.inventory.ids(), &["x".to_owned()]);
}

#[test]
fn partition_means_match_direct_recomputation() {
    let (lex, mwe) = random_kb_text(11, 25, 12, 50);
    let ds = parse_kb(&lex, &mwe).unwrap();
    let annotated: Vec<usize> = (0..ds.mwes.len()).filter(|&i| !ds.mwes[i].sememes.is_empty()).collect();

    let by_rule = partition_by_rule(&ds, &annotated);
    assert_eq!(by_rule.values().map(|b| b.members.len()).sum::<usize>(), annotated.len());
    for (rule, bucket) in &by_rule {
        let mut total = 0.0;
        let mut n = 0.0;
        for &i in &annotated {
            let m = &ds.mwes[i];
            if m.rule != *rule {
                continue;
            }
            let s1 = &ds.lexicon[&m.constituent1].sememes;
            let s2 = &ds.lexicon[&m.constituent2].sememes;
            total += compute_scd(&m.sememes, s1, s2).unwrap().value() as f64;
            n += 1.0;
        }
        assert!((bucket.mean_scd.unwrap() - total / n).abs() < 1e-12);
    }

    let by_scd = partition_by_scd(&ds, &annotated).unwrap();
    let mut seen = BTreeSet::new();
    for (level, members) in &by_scd {
        for &i in members {
            assert_eq!(ds.scd_of(i).unwrap(), *level);
            assert!(seen.insert(i));
        }
    }
    assert_eq!(seen.len(), annotated.len());
}

#[test]
fn single_rule_gives_single_bucket() {
    let ds = parse_kb("a\tx\nb\ty\n", "ab\ta\tb\tN_N\tx,y\nba\tb\ta\tN_N\ty\n").unwrap();
    let parts = partition_by_rule(&ds, &[0, 1]);
    assert_eq!(parts.len(), 1);
    assert_eq!(parts[&CombinationRule::NN].members, vec![0, 1]);
    assert_eq!(parts[&CombinationRule::NN].mean_scd, Some(2.5));
}

#[test]
fn graded_examples_cover_every_level() {
    let ds = parse_kb(
        include_str!("../../../data/graded/lexicon.tsv"),
        include_str!("../../../data/graded/mwes.tsv"),
    )
    .unwrap();
    let parts = partition_by_scd(&ds, &[0, 1, 2, 3]).unwrap();
    assert_eq!(parts.keys().copied().collect::<Vec<_>>(), ScdLevel::ALL.to_vec());
    assert!(parts.values().all(|m| m.len() == 1));
}
