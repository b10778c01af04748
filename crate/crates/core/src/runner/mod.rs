//! Config parsing, experiment grids, the bound-checking suite and the
//! command-line front end.

mod config;
mod experiment;
mod suite;

pub use config::{
    parse_config, DataConfig, ExperimentConfig, FoSpec, ObjectiveConfig, PopulationSpec, VerifyConfig, ZoSpec,
    DEFAULT_BATCH, DEFAULT_CADENCE, DEFAULT_ETA, DEFAULT_RV, DEFAULT_SEED_COUNT, DEFAULT_STEPS,
};
pub use experiment::{
    aggregate_csv_name, build_problem, cell_seed, git_blob_sha256, initial_point, partition_seed, read_manifest,
    run_cell, run_experiment, seed_csv_name, CellResult, ExperimentOutput, Manifest, ManifestEntry, Problem,
    MANIFEST_FILE,
};
pub use suite::{run_theory_suite, SuiteReport, REPORT_FILE};

use std::path::{Path, PathBuf};

use crate::error::{HdoError, Result};
use crate::objectives::{synthetic_classification, write_csv_dataset};

/// Process exit codes of the command-line tool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 1,
    RuntimeError = 2,
    CheckFailure = 3,
}

impl ExitStatus {
    pub fn of_error(e: &HdoError) -> Self {
        match e {
            HdoError::Config { .. } => ExitStatus::ConfigError,
            _ => ExitStatus::RuntimeError,
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seeds: Option<Vec<u64>>,
    pub out_dir: Option<PathBuf>,
    pub metric_cadence: Option<u64>,
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(d) = &o.out_dir {
            self.output_dir = Some(d.clone());
        }
        if let Some(c) = o.metric_cadence {
            self.metric_cadence = c;
        }
        self.validate()
    }
}

/// `--seeds` syntax: a comma-separated list of seeds and `a..b` ranges
/// (end exclusive), e.g. `0..5,10,12`.
pub fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let bad = || HdoError::config("--seeds", format!("expected e.g. `0..10` or `1,2,5`, got {text:?}"));
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim) {
        match part.split_once("..") {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                if a >= b {
                    return Err(bad());
                }
                seeds.extend(a..b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(seeds)
}

/// Parse `key=value,key=value` parameter lists.
pub fn parse_params(text: &str) -> Result<Vec<(String, String)>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| HdoError::config(kv.trim(), "expected key=value"))
        })
        .collect()
}

/// `gen-data classification samples=..,dim=..,label_noise=..,seed=..`:
/// write a synthetic ±1-labeled dataset as CSV with a header row.
pub fn gen_data(kind: &str, params: &str, out: &Path) -> Result<()> {
    if kind != "classification" {
        return Err(HdoError::config("kind", format!("unknown data kind {kind:?} (expected `classification`)")));
    }
    let (mut samples, mut dim, mut noise, mut seed) = (2000usize, 20usize, 0.1f64, 0u64);
    for (k, v) in parse_params(params)? {
        let bad = |e: &dyn std::fmt::Display| HdoError::config(k.clone(), format!("cannot parse {v:?}: {e}"));
        match k.as_str() {
            "samples" => samples = v.parse().map_err(|e| bad(&e))?,
            "dim" => dim = v.parse().map_err(|e| bad(&e))?,
            "label_noise" => noise = v.parse().map_err(|e| bad(&e))?,
            "seed" => seed = v.parse().map_err(|e| bad(&e))?,
            _ => return Err(HdoError::config(k, "unknown parameter (expected samples, dim, label_noise, seed)")),
        }
    }
    let ds = synthetic_classification(samples, dim, noise, seed).map_err(|e| HdoError::config("params", e.to_string()))?;
    write_csv_dataset(&ds, out)
}

#[cfg(test)]
mod tests;
