//! Dense token embeddings with a frozen/trainable partition.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} values, found {found}")]
    Dimension {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: `{field}` is not a number")]
    NotNumeric { line: usize, field: String },
    #[error("line {line}: duplicate token `{token}`")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: token without values")]
    MissingValues { line: usize },
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("embedding table needs at least one token")]
    Empty,
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("init scale must be positive, got {0}")]
    BadScale(f64),
}

/// Token-indexed matrix; row `i` belongs to `tokens[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    matrix: DMatrix<f64>,
    trainable: Vec<bool>,
}

impl EmbeddingTable {
    /// Builds a table from rows; every token starts frozen.
    pub fn from_rows(tokens: Vec<String>, matrix: DMatrix<f64>) -> Result<Self, EmbeddingError> {
        if tokens.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        assert_eq!(tokens.len(), matrix.nrows(), "one row per token");
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(EmbeddingError::DuplicateToken {
                    line: i + 1,
                    token: t.clone(),
                });
            }
        }
        Ok(Self {
            dim: matrix.ncols(),
            trainable: vec![false; tokens.len()],
            tokens,
            index,
            matrix,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.matrix
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn lookup(&self, token: &str) -> Result<DVector<f64>, EmbeddingError> {
        let i = self
            .position(token)
            .ok_or_else(|| EmbeddingError::UnknownToken(token.to_owned()))?;
        Ok(self.row(i))
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.matrix.row(i).transpose()
    }

    pub fn set_row(&mut self, i: usize, v: &DVector<f64>) {
        self.matrix.row_mut(i).copy_from(&v.transpose());
    }

    pub fn is_trainable(&self, i: usize) -> bool {
        self.trainable[i]
    }

    pub fn mark_trainable<S: AsRef<str>>(&mut self, tokens: &[S]) -> Result<(), EmbeddingError> {
        let rows = tokens
            .iter()
            .map(|t| {
                self.position(t.as_ref())
                    .ok_or_else(|| EmbeddingError::UnknownToken(t.as_ref().to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        for i in rows {
            self.trainable[i] = true;
        }
        Ok(())
    }

    pub fn mark_all_trainable(&mut self) {
        self.trainable.iter_mut().for_each(|t| *t = true);
    }

    pub fn freeze_all(&mut self) {
        self.trainable.iter_mut().for_each(|t| *t = false);
    }

    /// Serializes in the same text format [`load_embeddings`] reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            for v in self.matrix.row(i).iter() {
                // `{}` prints the shortest string that parses back to the same f64
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Reads `token v1 … vd` lines. The dimension comes from `expected_dim` or,
/// when absent, from the first line. All tokens start frozen.
pub fn load_embeddings(text: &str, expected_dim: Option<usize>) -> Result<EmbeddingTable, EmbeddingError> {
    let mut dim = expected_dim;
    let mut tokens = Vec::new();
    let mut index = HashMap::new();
    let mut values: Vec<f64> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default();
        let row: Vec<&str> = fields.collect();
        if row.is_empty() {
            return Err(EmbeddingError::MissingValues { line: line_no });
        }
        let d = *dim.get_or_insert(row.len());
        if row.len() != d {
            return Err(EmbeddingError::Dimension {
                line: line_no,
                expected: d,
                found: row.len(),
            });
        }
        if index.insert(token.to_owned(), tokens.len()).is_some() {
            return Err(EmbeddingError::DuplicateToken {
                line: line_no,
                token: token.to_owned(),
            });
        }
        for f in row {
            values.push(f.parse().map_err(|_| EmbeddingError::NotNumeric {
                line: line_no,
                field: f.to_owned(),
            })?);
        }
        tokens.push(token.to_owned());
    }
    let d = dim.ok_or(EmbeddingError::Empty)?;
    if tokens.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    let matrix = DMatrix::from_row_slice(tokens.len(), d, &values);
    EmbeddingTable::from_rows(tokens, matrix)
}

/// Uniform initialization in `[-scale, scale]`; every token is trainable.
pub fn init_random(tokens: &[String], dim: usize, seed: u64, scale: f64) -> Result<EmbeddingTable, EmbeddingError> {
    if tokens.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    if dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    if !(scale > 0.0) {
        return Err(EmbeddingError::BadScale(scale));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matrix = DMatrix::from_fn(tokens.len(), dim, |_, _| rng.random_range(-scale..=scale));
    let mut table = EmbeddingTable::from_rows(tokens.to_vec(), matrix)?;
    table.mark_all_trainable();
    Ok(table)
}

/// Table whose rows come from `source` where available and from a seeded
/// uniform draw otherwise. Returns the tokens that had to be initialized.
pub fn assemble(
    tokens: &[String],
    source: Option<&EmbeddingTable>,
    dim: usize,
    seed: u64,
    scale: f64,
) -> Result<(EmbeddingTable, Vec<String>), EmbeddingError> {
    let mut table = init_random(tokens, dim, seed, scale)?;
    let mut missing = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        match source.and_then(|s| s.position(t).map(|j| (s, j))) {
            Some((s, j)) => {
                if s.dim() != dim {
                    return Err(EmbeddingError::Dimension {
                        line: j + 1,
                        expected: dim,
                        found: s.dim(),
                    });
                }
                table
                    .matrix
                    .row_mut(i)
                    .copy_from(&RowDVector::from_iterator(dim, s.matrix.row(j).iter().copied()));
            }
            None => missing.push(t.clone()),
        }
    }
    Ok((table, missing))
}
