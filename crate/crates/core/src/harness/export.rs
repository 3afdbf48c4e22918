use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::experiment::{ExperimentConfig, ExperimentSummary, RunRecord};

/// Column order of the per-replication CSV.
pub const CSV_HEADER: [&str; 6] = ["replication", "tau", "recommendation", "correct", "censored", "step_time_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Serialize)]
struct CsvRow {
    replication: u64,
    tau: u64,
    recommendation: usize,
    correct: bool,
    censored: bool,
    step_time_s: Option<f64>,
}

/// Writes one row per record. `step_time_s` is empty when timing was off.
pub fn write_records_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    // header written by hand so that an empty export still carries it
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(CsvRow {
            replication: r.replication,
            tau: r.tau,
            recommendation: r.recommendation,
            correct: r.correct,
            censored: r.censored,
            step_time_s: r.step_time_s,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Records as CSV, or as a JSON array including final counts and traces.
pub fn export_records(records: &[RunRecord], format: Format, path: &Path) -> Result<()> {
    match format {
        Format::Csv => write_records_csv(records, path),
        Format::Json => write_json(records, path),
    }
}

pub fn write_summary_json(summary: &ExperimentSummary, path: &Path) -> Result<()> {
    write_json(summary, path)
}

pub fn read_summary_json(path: &Path) -> Result<ExperimentSummary> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

/// Numerical tolerances in force, recorded for reproduction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub action_probability: f64,
    pub allocation: f64,
    pub ttts_resample_cap: u64,
    pub ttts_direct_below: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            action_probability: crate::action::DEFAULT_TOL,
            allocation: crate::allocation::DEFAULT_TOL,
            ttts_resample_cap: crate::rules::TTTS_RESAMPLE_CAP,
            ttts_direct_below: crate::rules::TTTS_DIRECT_BELOW,
        }
    }
}

/// Everything needed to rerun an experiment exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config: ExperimentConfig,
    pub base_seed: u64,
    pub check_every: u64,
    pub tolerances: Tolerances,
    pub version: String,
}

impl Metadata {
    pub fn new(config: &ExperimentConfig) -> Self {
        Metadata {
            config: config.clone(),
            base_seed: config.base_seed,
            check_every: config.check_every(),
            tolerances: Tolerances::default(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

/// Sidecar path for an output file: `out.csv` gives `out.meta.json`.
pub fn metadata_path(output: &Path) -> PathBuf {
    output.with_extension("meta.json")
}

pub fn write_metadata(config: &ExperimentConfig, path: &Path) -> Result<()> {
    write_json(&Metadata::new(config), path)
}

pub fn read_metadata(path: &Path) -> Result<Metadata> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}
