mod eval;
mod gradcheck;
mod scd;
mod synth;
mod train;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use sememe_sc::composition::{ComposerOptions, RuleMode};
use sememe_sc::training::Task;

use crate::config::RawConfig;

pub use eval::{eval_sememe, eval_sim};
pub use gradcheck::gradcheck;
pub use scd::scd;
pub use synth::gen_synthetic;
pub use train::train;

/// Failure that maps to the numerical exit code.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

pub(crate) fn out_dir(raw: &RawConfig) -> Result<PathBuf> {
    raw.output_path("out")
        .ok_or_else(|| anyhow!("missing required config key `out` (or --out DIR)"))
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub(crate) fn task(raw: &RawConfig) -> Result<Option<Task>> {
    raw.str("task")
        .map(|t| t.parse().map_err(|_| anyhow!("bad task `{t}`: expected similarity or sememe")))
        .transpose()
}

pub(crate) fn rule_mode(raw: &RawConfig) -> Result<Option<RuleMode>> {
    raw.str("rule_mode")
        .map(|m| m.parse().map_err(|_| anyhow!("bad rule_mode `{m}`: expected full or lowrank")))
        .transpose()
}

pub(crate) fn composer_options(raw: &RawConfig, default_h_r: usize) -> Result<ComposerOptions> {
    let defaults = ComposerOptions::default();
    let options = ComposerOptions {
        rule_mode: rule_mode(raw)?.unwrap_or(defaults.rule_mode),
        h_r: raw.parsed_or("h_r", default_h_r)?,
        shared_attention: raw.bool_or("shared_attention", defaults.shared_attention)?,
    };
    if options.h_r == 0 {
        return Err(anyhow!("`h_r` must be positive"));
    }
    Ok(options)
}

/// Shortest round-trip formatting, or empty for a missing value.
pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
