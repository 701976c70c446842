use std::path::PathBuf;

use anyhow::Result;
use clap::Args as ClapArgs;
use tpp_core::data::write_facts;
use tpp_core::synth::{gen_cohort, write_cohort, CohortSpec};

use crate::config::{self, FileConfig};
use crate::provenance::Provenance;

use super::{ensure_dir, write_json};

/// Generate a synthetic cohort: facts.csv plus cohort.csv labels.
#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Settings file; the `cohort` section configures generation
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Root seed (overrides the config file)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of patients (overrides the config file)
    #[arg(long)]
    patients: Option<usize>,
}

#[derive(serde::Serialize)]
struct SynthReport {
    n_patients: usize,
    n_facts: usize,
    seed: u64,
}

pub fn run(args: &Args, verbose: bool) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut spec: CohortSpec = config::section(&file.cohort, "cohort")?;
    if let Some(n) = args.patients {
        spec.n_patients = n;
    }
    let seed = file.seed(args.seed);
    if verbose {
        eprintln!("synth: spec {}", serde_json::to_string(&spec)?);
    }

    let (facts, rows) = gen_cohort(&spec, seed)?;

    ensure_dir(&args.out)?;
    write_facts(&args.out.join("facts.csv"), &facts)?;
    write_cohort(&args.out.join("cohort.csv"), &rows)?;
    write_json(
        &args.out.join("synth_report.json"),
        &SynthReport { n_patients: rows.len(), n_facts: facts.len(), seed },
    )?;

    let mut prov = Provenance::new("synth", seed, serde_json::json!({ "cohort": spec }));
    if let Some(p) = &args.config {
        prov.input(p)?;
    }
    prov.write(&args.out)?;

    eprintln!(
        "synth: {} patients, {} facts -> {}",
        rows.len(),
        facts.len(),
        args.out.display()
    );
    Ok(())
}
