use anyhow::{anyhow, bail, Result};
use sememe_sc::composition::{ComposerOptions, ComposerRegistry, RuleMode};
use sememe_sc::training::{grad_check, GradCheckDims, Task};

use super::{composer_options, create_dir, write, NumericalFailure};
use crate::config::RawConfig;
use crate::runlog::RunLog;

pub const TOLERANCE: f64 = 1e-4;
pub const DEFAULT_KINDS: &str = "add,mul,scas_s,scas,scmsa,scas_r:full,scas_r:lowrank,scmsa_r:full,scmsa_r:lowrank";

/// `name` or `name:rule_mode`.
fn parse_kind(spec: &str, base: &ComposerOptions) -> Result<(String, ComposerOptions)> {
    match spec.split_once(':') {
        None => Ok((spec.to_owned(), base.clone())),
        Some((name, mode)) => {
            let rule_mode: RuleMode = mode
                .parse()
                .map_err(|_| anyhow!("bad rule mode `{mode}` in `{spec}`"))?;
            Ok((name.to_owned(), ComposerOptions { rule_mode, ..base.clone() }))
        }
    }
}

pub fn gradcheck(raw: &RawConfig, log: &mut RunLog) -> Result<()> {
    let registry = ComposerRegistry::builtin();
    let base = composer_options(raw, 2)?;
    let mut kinds = raw.list("kinds");
    if kinds.is_empty() {
        kinds = DEFAULT_KINDS.split(',').map(str::to_owned).collect();
    }
    let mut tasks = Vec::new();
    for t in raw.list("tasks") {
        tasks.push(t.parse::<Task>().map_err(|_| anyhow!("bad task `{t}`"))?);
    }
    if tasks.is_empty() {
        tasks = Task::ALL.to_vec();
    }
    let dims = GradCheckDims {
        dim: raw.parsed_or("dim", 5)?,
        n_sememes: raw.parsed_or("n_sememes", 6)?,
    };
    if dims.dim == 0 || dims.n_sememes == 0 {
        bail!("`dim` and `n_sememes` must be positive");
    }
    let seed = raw.parsed_or("seed", 0)?;
    let composers = kinds
        .iter()
        .map(|k| {
            let (name, options) = parse_kind(k, &base)?;
            Ok(registry.build(&name, &options)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = raw.output_path("out");

    let mut csv = String::from("kind,task,max_rel_error,pass\n");
    let mut failures = Vec::new();
    println!("{:<18} {:<11} {:>14}  result", "kind", "task", "max rel error");
    for composer in &composers {
        for &task in &tasks {
            let err = grad_check(composer.as_ref(), task, dims, seed)?;
            let pass = err < TOLERANCE;
            let kind = composer.kind().to_string();
            println!("{kind:<18} {task:<11} {err:>14.3e}  {}", if pass { "pass" } else { "FAIL" });
            csv.push_str(&format!("{kind},{task},{err},{pass}\n"));
            if !pass {
                failures.push(format!("{kind}/{task}"));
            }
        }
    }
    if let Some(out) = out {
        create_dir(&out)?;
        write(&out.join("config.txt"), &raw.snapshot())?;
        write(&out.join("gradcheck.csv"), &csv)?;
        log.line(format!("wrote {}", out.join("gradcheck.csv").display()));
        log.save(&out)?;
    }
    if !failures.is_empty() {
        return Err(NumericalFailure(format!("gradient check failed for {}", failures.join(", "))).into());
    }
    Ok(())
}
