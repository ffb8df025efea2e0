use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use sememe_sc::evaluation::{pearson, spearman};
use sememe_sc::kb::parse_kb;

use super::{create_dir, out_dir, write};
use crate::config::RawConfig;
use crate::pipeline::read;
use crate::runlog::RunLog;

/// `token<TAB>value` lines; values may be averaged, hence real.
fn parse_gold(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (token, value) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("gold SCD line {}: expected token<TAB>value", n + 1))?;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| anyhow!("gold SCD line {}: bad value `{value}`", n + 1))?;
        if out.insert(token.to_owned(), v).is_some() {
            bail!("gold SCD line {}: duplicate token `{token}`", n + 1);
        }
    }
    Ok(out)
}

pub fn scd(raw: &RawConfig, log: &mut RunLog) -> Result<()> {
    let out = out_dir(raw)?;
    let lexicon = raw.required_input("lexicon")?;
    let mwes = raw.required_input("mwes")?;
    let gold_path = raw.input_path("gold_scd")?;

    let ds = parse_kb(&read(&lexicon)?, &read(&mwes)?).context("parsing the knowledge base")?;
    let unannotated: Vec<&str> = ds
        .mwes
        .iter()
        .filter(|m| m.sememes.is_empty())
        .map(|m| m.token.as_str())
        .collect();
    if !unannotated.is_empty() {
        bail!("MWEs without sememe annotations: {}", unannotated.join(", "));
    }
    let levels = (0..ds.mwes.len())
        .map(|i| ds.scd_of(i))
        .collect::<Result<Vec<_>, _>>()?;
    let gold = gold_path.map(|p| read(&p).and_then(|t| parse_gold(&t))).transpose()?;

    let mut correlations = None;
    if let Some(gold) = &gold {
        let (mut computed, mut human) = (Vec::new(), Vec::new());
        for (token, v) in gold {
            let i = ds
                .mwe_index(token)
                .ok_or_else(|| anyhow!("gold SCD names unknown MWE `{token}`"))?;
            computed.push(levels[i].value() as f64);
            human.push(*v);
        }
        correlations = Some((computed.len(), pearson(&computed, &human)?, spearman(&computed, &human)?));
    }

    create_dir(&out)?;
    write(&out.join("config.txt"), &raw.snapshot())?;
    let report: String = ds
        .mwes
        .iter()
        .zip(&levels)
        .map(|(m, l)| format!("{}\t{}\n", m.token, l))
        .collect();
    write(&out.join("scd.tsv"), &report)?;
    log.line(format!("wrote SCDs of {} MWEs to {}", levels.len(), out.join("scd.tsv").display()));
    if let Some((n, p, s)) = correlations {
        write(&out.join("correlation.csv"), &format!("pairs,pearson,spearman\n{n},{p},{s}\n"))?;
        log.line(format!("pearson {p:.4}, spearman {s:.4} over {n} MWEs"));
    }
    log.save(&out)
}
