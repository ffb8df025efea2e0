mod commands;
mod config;
mod pipeline;
mod runlog;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use sememe_sc::training::TrainError;

use crate::commands::NumericalFailure;
use crate::config::RawConfig;
use crate::runlog::RunLog;

/// Sememe-aware composition of multiword-expression embeddings.
#[derive(Debug, Parser)]
#[command(name = "sememe-sc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the compositionality degree of every annotated MWE.
    Scd(Common),
    /// Train a composition model for MWE similarity or sememe prediction.
    Train(Common),
    /// Spearman correlation of composed-MWE cosines with human scores.
    EvalSim(Common),
    /// MAP and F1 of sememe prediction, with SCD and rule breakdowns.
    EvalSememe(Common),
    /// Write a synthetic knowledge base, embeddings and similarity set.
    GenSynthetic(Synthetic),
    /// Compare analytic gradients with finite differences.
    Gradcheck(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory for outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// add, mul, scas_s, scas, scmsa, scas_r or scmsa_r.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_parser = ["similarity", "sememe"])]
    task: Option<String>,
    #[arg(long, value_parser = ["full", "lowrank"])]
    rule_mode: Option<String>,
    /// Override any config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Do not echo log lines to stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct Synthetic {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n_words: Option<usize>,
    #[arg(long)]
    n_sememes: Option<usize>,
    #[arg(long)]
    n_mwes: Option<usize>,
    /// Embedding dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Standard deviation of noise on reference embeddings.
    #[arg(long)]
    noise: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<RawConfig> {
        let mut raw = match &self.config {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        if let Some(v) = self.seed {
            raw.set("seed", v.to_string())?;
        }
        if let Some(v) = &self.out {
            raw.set("out", v.display().to_string())?;
        }
        for (key, v) in [("model", &self.model), ("task", &self.task), ("rule_mode", &self.rule_mode)] {
            if let Some(v) = v {
                raw.set(key, v.clone())?;
            }
        }
        for pair in &self.set {
            raw.set_pair(pair)?;
        }
        Ok(raw)
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, extra): (&Common, Vec<(&str, Option<String>)>) = match &cli.command {
        Command::GenSynthetic(s) => (
            &s.common,
            vec![
                ("n_words", s.n_words.map(|v| v.to_string())),
                ("n_sememes", s.n_sememes.map(|v| v.to_string())),
                ("n_mwes", s.n_mwes.map(|v| v.to_string())),
                ("dim", s.dim.map(|v| v.to_string())),
                ("noise", s.noise.map(|v| v.to_string())),
            ],
        ),
        Command::Scd(c)
        | Command::Train(c)
        | Command::EvalSim(c)
        | Command::EvalSememe(c)
        | Command::Gradcheck(c) => (c, Vec::new()),
    };
    let mut raw = common.resolve()?;
    for (key, v) in extra {
        if let Some(v) = v {
            raw.set(key, v)?;
        }
    }
    let mut log = RunLog::new(common.quiet);
    match cli.command {
        Command::Scd(_) => commands::scd(&raw, &mut log),
        Command::Train(_) => commands::train(&raw, &mut log),
        Command::EvalSim(_) => commands::eval_sim(&raw, &mut log),
        Command::EvalSememe(_) => commands::eval_sememe(&raw, &mut log),
        Command::GenSynthetic(_) => commands::gen_synthetic(&raw, &mut log),
        Command::Gradcheck(_) => commands::gradcheck(&raw, &mut log),
    }
}

fn is_numerical(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<NumericalFailure>().is_some()
            || matches!(e.downcast_ref::<TrainError>(), Some(TrainError::NonFiniteLoss { .. }))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_numerical(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
