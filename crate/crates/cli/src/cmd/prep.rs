use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args as ClapArgs;
use tpp_core::data::{
    build_sequences, read_facts, split_patients, BucketSpec, Exclusion, SequenceLimits, Vocabulary,
};

use crate::config::{self, FileConfig};
use crate::provenance::Provenance;

use super::{ensure_dir, write_json};

/// Build the vocabulary, numeric buckets, event sequences, and the
/// patient split from a raw fact table.
#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Input fact table: patient_id,interval,concept,value
    #[arg(long)]
    facts: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Settings file; `limits` and `split_fractions` apply here
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for the split shuffle (overrides the config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Exclude patients with fewer events (overrides the config file)
    #[arg(long)]
    min_events: Option<usize>,
    /// Keep at most this many events per patient (overrides the config file)
    #[arg(long)]
    max_events: Option<usize>,
}

#[derive(serde::Serialize)]
struct PrepReport {
    n_facts: usize,
    n_patients_kept: usize,
    n_truncated: usize,
    exclusions: Vec<Exclusion>,
    unknown_concepts: BTreeMap<String, usize>,
    limits: SequenceLimits,
    split_fractions: (f64, f64, f64),
    split_sizes: (usize, usize, usize),
    n_indicative: usize,
    n_numeric: usize,
    vocab_hash: String,
    seed: u64,
}

pub fn run(args: &Args, verbose: bool) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let seed = file.seed(args.seed);
    let mut limits: SequenceLimits = config::section(&file.limits, "limits")?;
    if let Some(n) = args.min_events {
        limits.min_events = n;
    }
    if let Some(n) = args.max_events {
        limits.max_events = n;
    }
    let fractions = file.split_fractions.unwrap_or((0.7, 0.15, 0.15));

    let facts = read_facts(&args.facts)?;
    let vocab = Vocabulary::from_facts(&facts)?;
    if verbose {
        eprintln!(
            "prep: vocabulary has {} indicative and {} numeric concepts",
            vocab.n_indicative(),
            vocab.n_numeric()
        );
    }
    let report = build_sequences(&facts, &vocab, limits)?;

    let mut values = vec![Vec::new(); vocab.n_numeric()];
    for seq in &report.sequences {
        for obs in &seq.numerics {
            values[obs.concept].push(obs.value);
        }
    }
    let buckets = BucketSpec::fit(&vocab, &values)?;

    let ids: Vec<_> = report.sequences.iter().map(|s| s.patient_id.clone()).collect();
    let split = split_patients(&ids, fractions, seed)?;

    let n_kept = report.sequences.len();
    let n_seen = n_kept + report.exclusions.len();

    ensure_dir(&args.out)?;
    vocab.save(&args.out.join("vocab.json"))?;
    buckets.save(&args.out.join("buckets.json"))?;
    write_json(&args.out.join("sequences.json"), &report.sequences)?;
    write_json(&args.out.join("split.json"), &split)?;
    write_json(
        &args.out.join("prep_report.json"),
        &PrepReport {
            n_facts: facts.len(),
            n_patients_kept: report.sequences.len(),
            n_truncated: report.sequences.iter().filter(|s| s.truncated).count(),
            exclusions: report.exclusions,
            unknown_concepts: report.unknown_concepts,
            limits,
            split_fractions: fractions,
            split_sizes: (split.train.len(), split.val.len(), split.test.len()),
            n_indicative: vocab.n_indicative(),
            n_numeric: vocab.n_numeric(),
            vocab_hash: vocab.hash(),
            seed,
        },
    )?;

    let mut prov = Provenance::new(
        "prep",
        seed,
        serde_json::json!({ "limits": limits, "split_fractions": fractions }),
    );
    prov.input(&args.facts)?;
    if let Some(p) = &args.config {
        prov.input(p)?;
    }
    prov.write(&args.out)?;

    eprintln!(
        "prep: kept {n_kept} of {n_seen} patients ({} train / {} val / {} test) -> {}",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        args.out.display()
    );
    Ok(())
}
