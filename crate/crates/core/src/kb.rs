//! Sememe-annotated lexicons: parsing, frequency filtering, splitting and
//! the set-relation rules that grade how compositional an MWE is.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KbError {
    #[error("{file} line {line}: expected {expected} tab-separated fields, found {found}")]
    FieldCount {
        file: &'static str,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{file} line {line}: empty token")]
    EmptyToken { file: &'static str, line: usize },
    #[error("{file} line {line}: duplicate token `{token}`")]
    DuplicateToken {
        file: &'static str,
        line: usize,
        token: String,
    },
    #[error("lexicon line {line}: entry `{token}` has no sememes")]
    EmptySememes { line: usize, token: String },
    #[error("{file} line {line}: empty sememe identifier")]
    EmptySememeId { file: &'static str, line: usize },
    #[error("mwe line {line}: unknown constituent `{token}`")]
    UnknownConstituent { line: usize, token: String },
    #[error("mwe line {line}: unknown combination rule `{rule}`")]
    UnknownRule { line: usize, rule: String },
    #[error("unknown combination rule `{0}`")]
    BadRule(String),
    #[error("sememe sets must be non-empty to grade compositionality")]
    EmptySet,
    #[error("mwe `{0}` has no sememe annotation")]
    MissingAnnotation(String),
    #[error("dataset has {0} MWEs; at least 3 are needed to split")]
    TooFewMwes(usize),
    #[error("split ratios must be positive")]
    BadRatios,
    #[error("min_frequency must be at least 1")]
    BadThreshold,
}

/// Global ordered set of sememe identifiers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SememeInventory {
    ids: Vec<String>,
    index: HashMap<String, usize>,
}

impl SememeInventory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the position of `id`, appending it if it is new.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_owned());
        self.index.insert(id.to_owned(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Sememe set stored as inventory positions.
pub type SememeSet = BTreeSet<usize>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub token: String,
    pub sememes: SememeSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CombinationRule {
    AdjN,
    NN,
    VN,
    Other,
}

impl CombinationRule {
    pub const ALL: [CombinationRule; 4] = [
        CombinationRule::AdjN,
        CombinationRule::NN,
        CombinationRule::VN,
        CombinationRule::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CombinationRule::AdjN => "ADJ_N",
            CombinationRule::NN => "N_N",
            CombinationRule::VN => "V_N",
            CombinationRule::Other => "OTHER",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for CombinationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CombinationRule {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ADJ_N" => Ok(CombinationRule::AdjN),
            "N_N" => Ok(CombinationRule::NN),
            "V_N" => Ok(CombinationRule::VN),
            "OTHER" => Ok(CombinationRule::Other),
            _ => Err(KbError::BadRule(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MweEntry {
    pub token: String,
    pub constituent1: String,
    pub constituent2: String,
    pub rule: CombinationRule,
    /// May be empty for unannotated MWEs.
    pub sememes: SememeSet,
}

/// Four-level semantic compositionality degree; higher is more compositional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScdLevel {
    Zero = 0,
    One = 1,
    Two = 2,
    Three = 3,
}

impl ScdLevel {
    pub const ALL: [ScdLevel; 4] = [ScdLevel::Zero, ScdLevel::One, ScdLevel::Two, ScdLevel::Three];

    pub fn value(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ScdLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KbDataset {
    pub inventory: SememeInventory,
    /// Lexicon entries in file order.
    pub lexicon: IndexMap<String, LexEntry>,
    pub mwes: Vec<MweEntry>,
    pub splits: Option<Splits>,
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn parse_sememe_field(
    field: &str,
    inventory: &mut SememeInventory,
    file: &'static str,
    line: usize,
) -> Result<SememeSet, KbError> {
    let mut set = SememeSet::new();
    if field.is_empty() {
        return Ok(set);
    }
    for id in field.split(',') {
        if id.is_empty() {
            return Err(KbError::EmptySememeId { file, line });
        }
        set.insert(inventory.intern(id));
    }
    Ok(set)
}

/// Parses a lexicon file and an MWE file into a dataset without splits.
pub fn parse_kb(lexicon_text: &str, mwe_text: &str) -> Result<KbDataset, KbError> {
    let mut inventory = SememeInventory::new();
    let mut lexicon = IndexMap::new();

    for (line, raw) in content_lines(lexicon_text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 2 {
            return Err(KbError::FieldCount {
                file: "lexicon",
                line,
                expected: 2,
                found: fields.len(),
            });
        }
        let token = fields[0];
        if token.is_empty() {
            return Err(KbError::EmptyToken { file: "lexicon", line });
        }
        if lexicon.contains_key(token) {
            return Err(KbError::DuplicateToken {
                file: "lexicon",
                line,
                token: token.to_owned(),
            });
        }
        let sememes = parse_sememe_field(fields[1], &mut inventory, "lexicon", line)?;
        if sememes.is_empty() {
            return Err(KbError::EmptySememes {
                line,
                token: token.to_owned(),
            });
        }
        lexicon.insert(
            token.to_owned(),
            LexEntry {
                token: token.to_owned(),
                sememes,
            },
        );
    }

    let mut mwes = Vec::new();
    let mut seen = BTreeSet::new();
    for (line, raw) in content_lines(mwe_text) {
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(KbError::FieldCount {
                file: "mwe",
                line,
                expected: 5,
                found: fields.len(),
            });
        }
        let token = fields[0];
        if token.is_empty() {
            return Err(KbError::EmptyToken { file: "mwe", line });
        }
        if !seen.insert(token.to_owned()) {
            return Err(KbError::DuplicateToken {
                file: "mwe",
                line,
                token: token.to_owned(),
            });
        }
        for c in &fields[1..3] {
            if !lexicon.contains_key(*c) {
                return Err(KbError::UnknownConstituent {
                    line,
                    token: (*c).to_owned(),
                });
            }
        }
        let rule = fields[3].parse().map_err(|_| KbError::UnknownRule {
            line,
            rule: fields[3].to_owned(),
        })?;
        let sememes = parse_sememe_field(fields[4], &mut inventory, "mwe", line)?;
        mwes.push(MweEntry {
            token: token.to_owned(),
            constituent1: fields[1].to_owned(),
            constituent2: fields[2].to_owned(),
            rule,
            sememes,
        });
    }

    Ok(KbDataset {
        inventory,
        lexicon,
        mwes,
        splits: None,
    })
}

impl KbDataset {
    fn join(&self, set: &SememeSet) -> String {
        set.iter()
            .map(|&i| self.inventory.id(i))
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Lexicon file text, in insertion order.
    pub fn lexicon_text(&self) -> String {
        let mut out = String::new();
        for e in self.lexicon.values() {
            out.push_str(&e.token);
            out.push('\t');
            out.push_str(&self.join(&e.sememes));
            out.push('\n');
        }
        out
    }

    pub fn mwe_text(&self) -> String {
        let mut out = String::new();
        for m in &self.mwes {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                m.token,
                m.constituent1,
                m.constituent2,
                m.rule,
                self.join(&m.sememes)
            ));
        }
        out
    }

    pub fn mwe_index(&self, token: &str) -> Option<usize> {
        self.mwes.iter().position(|m| m.token == token)
    }

    pub fn constituent_sememes(&self, mwe: &MweEntry) -> (&SememeSet, &SememeSet) {
        (
            &self.lexicon[&mwe.constituent1].sememes,
            &self.lexicon[&mwe.constituent2].sememes,
        )
    }

    /// Compositionality degree of one MWE.
    pub fn scd_of(&self, idx: usize) -> Result<ScdLevel, KbError> {
        let m = &self.mwes[idx];
        if m.sememes.is_empty() {
            return Err(KbError::MissingAnnotation(m.token.clone()));
        }
        let (s1, s2) = self.constituent_sememes(m);
        compute_scd(&m.sememes, s1, s2)
    }
}

/// Drops sememes annotated on fewer than `min_frequency` entries, counting
/// both words and MWEs. Removing entries can push other sememes under the
/// threshold, so the pass repeats until nothing changes.
pub fn filter_sememes(ds: &KbDataset, min_frequency: usize) -> Result<KbDataset, KbError> {
    if min_frequency == 0 {
        return Err(KbError::BadThreshold);
    }
    let mut current = filter_once(ds, min_frequency);
    loop {
        let next = filter_once(&current, min_frequency);
        if next.inventory.len() == current.inventory.len() && next.mwes.len() == current.mwes.len() {
            return Ok(next);
        }
        current = next;
    }
}

fn filter_once(ds: &KbDataset, min_frequency: usize) -> KbDataset {
    let mut counts = vec![0usize; ds.inventory.len()];
    let annotations = ds.lexicon.values().map(|e| &e.sememes).chain(ds.mwes.iter().map(|m| &m.sememes));
    for set in annotations {
        for &s in set {
            counts[s] += 1;
        }
    }
    let mut inventory = SememeInventory::new();
    let mut remap = vec![None; ds.inventory.len()];
    for (i, id) in ds.inventory.ids().iter().enumerate() {
        if counts[i] >= min_frequency {
            remap[i] = Some(inventory.intern(id));
        }
    }
    let project = |set: &SememeSet| -> SememeSet { set.iter().filter_map(|&s| remap[s]).collect() };

    let lexicon: IndexMap<String, LexEntry> = ds
        .lexicon
        .iter()
        .filter_map(|(k, e)| {
            let sememes = project(&e.sememes);
            (!sememes.is_empty()).then(|| {
                (
                    k.clone(),
                    LexEntry {
                        token: e.token.clone(),
                        sememes,
                    },
                )
            })
        })
        .collect();
    let mwes = ds
        .mwes
        .iter()
        .filter(|m| lexicon.contains_key(&m.constituent1) && lexicon.contains_key(&m.constituent2))
        .map(|m| MweEntry {
            sememes: project(&m.sememes),
            ..m.clone()
        })
        .collect();

    KbDataset {
        inventory,
        lexicon,
        mwes,
        splits: None,
    }
}

/// Grades an MWE's sememe set against the union of its constituents' sets.
///
/// Conditions are tried from the most to the least compositional level:
/// equal to the union (3), proper subset (2), partial overlap (1), disjoint (0).
pub fn compute_scd<T: Ord>(
    s_p: &BTreeSet<T>,
    s_w1: &BTreeSet<T>,
    s_w2: &BTreeSet<T>,
) -> Result<ScdLevel, KbError> {
    if s_p.is_empty() || s_w1.is_empty() || s_w2.is_empty() {
        return Err(KbError::EmptySet);
    }
    let union: BTreeSet<&T> = s_w1.union(s_w2).collect();
    let p: BTreeSet<&T> = s_p.iter().collect();
    Ok(if p == union {
        ScdLevel::Three
    } else if p.is_subset(&union) {
        ScdLevel::Two
    } else if !p.is_disjoint(&union) {
        ScdLevel::One
    } else {
        ScdLevel::Zero
    })
}

/// Size of each split: valid and test get the floor of their proportional
/// share (at least one each), train takes the remainder.
pub fn split_sizes(n: usize, ratios: (u32, u32, u32)) -> Result<(usize, usize, usize), KbError> {
    let (a, b, c) = ratios;
    if a == 0 || b == 0 || c == 0 {
        return Err(KbError::BadRatios);
    }
    if n < 3 {
        return Err(KbError::TooFewMwes(n));
    }
    let total = (a + b + c) as usize;
    let valid = (n * b as usize / total).max(1);
    let test = (n * c as usize / total).max(1);
    Ok((n - valid - test, valid, test))
}

/// Shuffles MWE indices with a seeded generator and cuts them into
/// train/valid/test.
pub fn split_dataset(
    ds: &KbDataset,
    ratios: (u32, u32, u32),
    seed: u64,
) -> Result<KbDataset, KbError> {
    let n = ds.mwes.len();
    let (n_train, n_valid, _) = split_sizes(n, ratios)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = order[..n_train].to_vec();
    let mut valid = order[n_train..n_train + n_valid].to_vec();
    let mut test = order[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(KbDataset {
        splits: Some(Splits { train, valid, test }),
        ..ds.clone()
    })
}

pub fn partition_by_scd(
    ds: &KbDataset,
    indices: &[usize],
) -> Result<BTreeMap<ScdLevel, Vec<usize>>, KbError> {
    let mut out: BTreeMap<ScdLevel, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        out.entry(ds.scd_of(i)?).or_default().push(i);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleBucket {
    pub members: Vec<usize>,
    /// Mean SCD over members that carry annotations; `None` when none do.
    pub mean_scd: Option<f64>,
}

pub fn partition_by_rule(ds: &KbDataset, indices: &[usize]) -> BTreeMap<CombinationRule, RuleBucket> {
    let mut groups: BTreeMap<CombinationRule, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        groups.entry(ds.mwes[i].rule).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(rule, members)| {
            let scds: Vec<f64> = members
                .iter()
                .filter_map(|&i| ds.scd_of(i).ok())
                .map(|l| l.value() as f64)
                .collect();
            let mean_scd = (!scds.is_empty()).then(|| scds.iter().sum::<f64>() / scds.len() as f64);
            (rule, RuleBucket { members, mean_scd })
        })
        .collect()
}
