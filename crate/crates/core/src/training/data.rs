use nalgebra::DVector;

use super::{Example, Target, Task, TrainError};
use crate::composition::MweInput;
use crate::embedding::EmbeddingTable;
use crate::kb::KbDataset;

/// Embedding sources needed to turn KB records into training examples.
#[derive(Debug, Clone, Copy)]
pub struct ExampleSource<'a> {
    /// Frozen constituent embeddings.
    pub words: &'a EmbeddingTable,
    /// Reference MWE embeddings; required for the similarity task.
    pub references: Option<&'a EmbeddingTable>,
}

impl ExampleSource<'_> {
    pub fn input(&self, ds: &KbDataset, idx: usize) -> Result<MweInput, Vec<String>> {
        let m = &ds.mwes[idx];
        let mut missing = Vec::new();
        let mut word = |t: &str| match self.words.lookup(t) {
            Ok(v) => v,
            Err(_) => {
                missing.push(format!("word embedding for `{t}`"));
                DVector::zeros(self.words.dim())
            }
        };
        let w1 = word(&m.constituent1);
        let w2 = word(&m.constituent2);
        if !missing.is_empty() {
            return Err(missing);
        }
        let (s1, s2) = ds.constituent_sememes(m);
        Ok(MweInput {
            w1,
            w2,
            sememes1: s1.iter().copied().collect(),
            sememes2: s2.iter().copied().collect(),
            rule: Some(m.rule),
        })
    }
}

/// Builds examples for `indices`, listing every coverage gap in one error.
pub fn build_examples(
    ds: &KbDataset,
    indices: &[usize],
    source: ExampleSource<'_>,
    task: Task,
) -> Result<Vec<Example>, TrainError> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(indices.len());
    for &i in indices {
        let m = &ds.mwes[i];
        let input = match source.input(ds, i) {
            Ok(x) => Some(x),
            Err(gaps) => {
                missing.extend(gaps);
                None
            }
        };
        let target = match task {
            Task::Similarity => match source.references.map(|r| r.lookup(&m.token)) {
                Some(Ok(v)) => Some(Target::Reference(v)),
                _ => {
                    missing.push(format!("reference embedding for `{}`", m.token));
                    None
                }
            },
            Task::Sememe => {
                if m.sememes.is_empty() {
                    missing.push(format!("sememe annotation for `{}`", m.token));
                    None
                } else {
                    let mut gold = vec![false; ds.inventory.len()];
                    for &s in &m.sememes {
                        gold[s] = true;
                    }
                    Some(Target::Sememes(gold))
                }
            }
        };
        if let (Some(input), Some(target)) = (input, target) {
            out.push(Example {
                name: m.token.clone(),
                input,
                target,
            });
        }
    }
    if !missing.is_empty() {
        return Err(TrainError::Coverage(missing));
    }
    Ok(out)
}
