//! `key = value` run configuration with command-line overrides.
//!
//! Keys use underscores; `--some-key` style spellings are accepted and
//! normalized. Relative paths in a config file resolve against the file's
//! directory, relative paths given on the command line against the working
//! directory.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

pub const KNOWN_KEYS: &[&str] = &[
    "allow_skip",
    "batch_size",
    "checkpoint",
    "decay",
    "delta_grid",
    "dim",
    "embeddings",
    "epochs",
    "gold_scd",
    "h_r",
    "init_scale",
    "k",
    "kinds",
    "lambda",
    "lexicon",
    "lr0",
    "min_sememe_frequency",
    "model",
    "mwes",
    "n_mwes",
    "n_pairs",
    "n_sememes",
    "n_words",
    "noise",
    "out",
    "references",
    "rule_mode",
    "scd_mix",
    "seed",
    "sememe_embeddings",
    "shared_attention",
    "similarity",
    "split",
    "task",
    "tasks",
    "tune_sememes",
];

const PATH_KEYS: &[&str] = &[
    "checkpoint",
    "embeddings",
    "gold_scd",
    "lexicon",
    "mwes",
    "out",
    "references",
    "sememe_embeddings",
    "similarity",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    /// Directory relative paths resolve against.
    base: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

pub fn normalize_key(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('-', "_")
}

fn check_key(key: &str) -> Result<()> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        bail!("unknown config key `{key}`")
    }
}

impl RawConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected `key = value`", n + 1))?;
            let key = normalize_key(k);
            check_key(&key).with_context(|| format!("config line {}", n + 1))?;
            cfg.entries.insert(
                key,
                Entry {
                    value: v.trim().to_owned(),
                    base: base.to_owned(),
                },
            );
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().map(Path::to_owned).unwrap_or_default();
        Self::parse(&text, &base).with_context(|| format!("in {}", path.display()))
    }

    /// Sets a value given on the command line.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        let key = normalize_key(key);
        check_key(&key)?;
        self.entries.insert(
            key,
            Entry {
                value: value.into(),
                base: PathBuf::new(),
            },
        );
        Ok(())
    }

    /// Applies a `KEY=VALUE` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("expected KEY=VALUE, got `{pair}`"))?;
        self.set(k, v.trim())
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn parsed<T>(&self, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow!("bad value `{v}` for `{key}`: {e}")),
        }
    }

    pub fn parsed_or<T>(&self, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.str(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => bail!("bad value `{v}` for `{key}`: expected true or false"),
        }
    }

    /// Comma-separated list.
    pub fn list(&self, key: &str) -> Vec<String> {
        self.str(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn resolve(&self, key: &str, value: &str) -> PathBuf {
        let p = PathBuf::from(value);
        if p.is_absolute() {
            p
        } else {
            self.entries[key].base.join(p)
        }
    }

    /// Path without an existence check (outputs).
    pub fn output_path(&self, key: &str) -> Option<PathBuf> {
        self.str(key).map(|v| self.resolve(key, v))
    }

    /// Path that must exist.
    pub fn input_path(&self, key: &str) -> Result<Option<PathBuf>> {
        let Some(v) = self.str(key) else { return Ok(None) };
        let p = self.resolve(key, v);
        if !p.exists() {
            bail!("`{key}`: {} does not exist", p.display());
        }
        Ok(Some(p))
    }

    pub fn required_input(&self, key: &str) -> Result<PathBuf> {
        self.input_path(key)?
            .ok_or_else(|| anyhow!("missing required config key `{key}`"))
    }

    /// Comma-separated paths that must exist.
    pub fn input_paths(&self, key: &str) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for v in self.list(key) {
            let p = self.resolve(key, &v);
            if !p.exists() {
                bail!("`{key}`: {} does not exist", p.display());
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Resolved `key = value` lines, sorted by key. Paths are made absolute
    /// so the snapshot reruns from any directory.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, e) in &self.entries {
            let value = if PATH_KEYS.contains(&k.as_str()) {
                e.value
                    .split(',')
                    .map(|v| {
                        let p = self.resolve(k, v.trim());
                        std::path::absolute(&p).unwrap_or(p).display().to_string()
                    })
                    .collect::<Vec<_>>()
                    .join(",")
            } else {
                e.value.clone()
            };
            out.push_str(&format!("{k} = {value}\n"));
        }
        out
    }
}

/// `a:b:c` split ratios.
pub fn parse_ratios(v: &str) -> Result<(u32, u32, u32)> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() != 3 {
        bail!("split must look like 8:1:1, got `{v}`");
    }
    let n = |s: &str| -> Result<u32> { s.trim().parse().map_err(|_| anyhow!("bad split ratio `{s}`")) };
    Ok((n(parts[0])?, n(parts[1])?, n(parts[2])?))
}
