use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

/// Messages echoed to stderr and kept for the run directory's `run.log`.
#[derive(Debug, Default)]
pub struct RunLog {
    lines: Vec<String>,
    quiet: bool,
}

impl RunLog {
    pub fn new(quiet: bool) -> Self {
        Self {
            lines: Vec::new(),
            quiet,
        }
    }

    pub fn line(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        if !self.quiet {
            eprintln!("{msg}");
        }
        self.lines.push(msg);
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = self.lines.join("\n");
        text.push('\n');
        let path = dir.join("run.log");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}
