//! Checkpoint directories: one embedding-format text file per tensor plus a
//! `manifest.txt` of `key=value` lines.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

use super::Task;
use crate::composition::{
    Composer, ComposerOptions, ComposerRegistry, CompositionError, ModelParams, ParamRole, RuleMode, Tensor,
};
use crate::embedding::{load_embeddings, EmbeddingError, EmbeddingTable};

pub const MANIFEST: &str = "manifest.txt";
pub const SEMEME_FILE: &str = "sememes.emb";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{path}: {source}")]
    Embedding { path: PathBuf, source: EmbeddingError },
    #[error(transparent)]
    Composition(#[from] CompositionError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointMeta {
    /// Registry name of the model.
    pub model: String,
    pub rule_mode: Option<RuleMode>,
    pub dim: usize,
    pub h_r: usize,
    pub shared_attention: bool,
    pub task: Task,
    pub epoch: usize,
    pub lr: f64,
}

impl CheckpointMeta {
    pub fn options(&self) -> ComposerOptions {
        ComposerOptions {
            rule_mode: self.rule_mode.unwrap_or(RuleMode::LowRank),
            h_r: self.h_r,
            shared_attention: self.shared_attention,
        }
    }

    pub fn manifest(&self) -> String {
        let rule_mode = self.rule_mode.map_or("none", RuleMode::as_str);
        format!(
            "kind={}\nrule_mode={}\nd={}\nh_r={}\nshared_attention={}\ntask={}\nepoch={}\nlr={}\n",
            self.model, rule_mode, self.dim, self.h_r, self.shared_attention, self.task, self.epoch, self.lr
        )
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let bad = |m: String| CheckpointError::Manifest(m);
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed line `{line}`")))?;
            kv.insert(k.trim(), v.trim());
        }
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("missing key `{k}`")));
        fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T, CheckpointError> {
            v.parse()
                .map_err(|_| CheckpointError::Manifest(format!("bad value `{v}` for `{k}`")))
        }
        let rule_mode = match get("rule_mode")? {
            "none" => None,
            m => Some(m.parse()?),
        };
        Ok(Self {
            model: get("kind")?.to_owned(),
            rule_mode,
            dim: num("d", get("d")?)?,
            h_r: num("h_r", get("h_r")?)?,
            shared_attention: num("shared_attention", get("shared_attention")?)?,
            task: get("task")?
                .parse()
                .map_err(|_| bad(format!("bad task `{}`", kv["task"])))?,
            epoch: num("epoch", get("epoch")?)?,
            lr: num("lr", get("lr")?)?,
        })
    }
}

fn write(path: PathBuf, contents: &str) -> Result<(), CheckpointError> {
    fs::write(&path, contents).map_err(|source| CheckpointError::Io { path, source })
}

fn read(path: PathBuf) -> Result<String, CheckpointError> {
    fs::read_to_string(&path).map_err(|source| CheckpointError::Io { path, source })
}

fn tensor_table(name: &str, tensor: &Tensor) -> EmbeddingTable {
    let m = &tensor.value;
    let (tokens, rows) = match tensor.role {
        ParamRole::Bias => (vec![name.to_owned()], m.transpose()),
        ParamRole::Weight => ((0..m.nrows()).map(|i| i.to_string()).collect(), m.clone()),
    };
    EmbeddingTable::from_rows(tokens, rows).expect("tensor rows are non-empty and uniquely named")
}

pub fn save(dir: &Path, meta: &CheckpointMeta, params: &ModelParams) -> Result<(), CheckpointError> {
    fs::create_dir_all(dir).map_err(|source| CheckpointError::Io {
        path: dir.to_owned(),
        source,
    })?;
    write(dir.join(MANIFEST), &meta.manifest())?;
    for (name, t) in &params.tensors {
        write(dir.join(format!("{name}.emb")), &tensor_table(name, t).to_text())?;
    }
    write(dir.join(SEMEME_FILE), &params.sememes.to_text())
}

pub fn load(
    dir: &Path,
    registry: &ComposerRegistry,
) -> Result<(CheckpointMeta, Box<dyn Composer>, ModelParams), CheckpointError> {
    let meta = CheckpointMeta::parse(&read(dir.join(MANIFEST))?)?;
    let composer = registry.build(&meta.model, &meta.options())?;
    let load_table = |file: String, dim: usize| -> Result<EmbeddingTable, CheckpointError> {
        let path = dir.join(file);
        load_embeddings(&read(path.clone())?, Some(dim)).map_err(|source| CheckpointError::Embedding { path, source })
    };
    let mut tensors = BTreeMap::new();
    for spec in composer.param_specs(meta.dim) {
        let file = format!("{}.emb", spec.name);
        let (expect_rows, dim) = match spec.role {
            ParamRole::Bias => (1, spec.rows),
            ParamRole::Weight => (spec.rows, spec.cols),
        };
        let table = load_table(file.clone(), dim)?;
        if table.len() != expect_rows {
            return Err(CheckpointError::Manifest(format!(
                "{file}: expected {expect_rows} rows, found {}",
                table.len()
            )));
        }
        let value: DMatrix<f64> = match spec.role {
            ParamRole::Bias => table.matrix().transpose(),
            ParamRole::Weight => table.matrix().clone(),
        };
        tensors.insert(spec.name, Tensor { value, role: spec.role });
    }
    let sememes = load_table(SEMEME_FILE.to_owned(), meta.dim)?;
    let params = ModelParams {
        dim: meta.dim,
        tensors,
        sememes,
    };
    Ok((meta, composer, params))
}
