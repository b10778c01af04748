use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataConfig, ExperimentConfig, ObjectiveConfig};
use crate::error::{HdoError, Result};
use crate::metrics::{aggregate_seeds, write_aggregate_csv, write_metrics_csv, MetricsRecord};
use crate::objectives::{
    load_csv_dataset, make_logistic, make_nonconvex, partition_indices, synthetic_classification, CsvFormat, Dataset,
    ObjectiveSpec, QuadraticBuilder, StochasticObjective,
};
use crate::protocol::{init_population, run, RunOptions};
use crate::rng;

/// Training objective plus optional held-out objective of the same kind.
#[derive(Debug, Clone)]
pub struct Problem {
    pub objective: ObjectiveSpec,
    pub validation: Option<ObjectiveSpec>,
}

fn split_dataset(ds: &Dataset, train: usize) -> Result<(Dataset, Dataset)> {
    let part = |range: std::ops::Range<usize>| {
        let features = range.clone().flat_map(|i| ds.features(i).iter().copied()).collect();
        Dataset::from_flat(ds.dim(), features, ds.labels()[range].to_vec())
    };
    Ok((part(0..train)?, part(train..ds.len())?))
}

fn classification(objective: &ObjectiveConfig, ds: &Dataset) -> Result<ObjectiveSpec> {
    match objective {
        ObjectiveConfig::LogisticL2 { lambda } => make_logistic(ds, *lambda),
        ObjectiveConfig::SigmoidSqNonconvex {} => make_nonconvex(ds),
        ObjectiveConfig::Quadratic { .. } => unreachable!("validated: quadratic objectives have no dataset"),
    }
}

pub fn build_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let objective = cfg
        .objective
        .as_ref()
        .ok_or_else(|| HdoError::config("objective", "missing [objective] section"))?;
    if let ObjectiveConfig::Quadratic { dim, cond, samples, noise, seed } = objective {
        let objective = QuadraticBuilder::new(*dim, *cond, seed.unwrap_or(cfg.master_seed))
            .samples(*samples)
            .noise(*noise)
            .build()?;
        return Ok(Problem {
            objective,
            validation: None,
        });
    }
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| HdoError::config("data", "missing [data] section"))?;
    let (train, val) = match data {
        DataConfig::Synthetic {
            samples,
            dim,
            label_noise,
            validation_samples,
            seed,
        } => {
            let all = synthetic_classification(
                samples + validation_samples,
                *dim,
                *label_noise,
                seed.unwrap_or(cfg.master_seed),
            )?;
            if *validation_samples == 0 {
                (all, None)
            } else {
                let (train, val) = split_dataset(&all, *samples)?;
                (train, Some(val))
            }
        }
        DataConfig::Csv {
            path,
            has_header,
            validation_path,
        } => {
            let format = CsvFormat {
                has_header: *has_header,
            };
            let val = validation_path
                .as_ref()
                .map(|p| load_csv_dataset(p, format))
                .transpose()?;
            (load_csv_dataset(path, format)?, val)
        }
    };
    let validation = val.as_ref().map(|v| classification(objective, v)).transpose()?;
    if let Some(v) = &validation {
        if v.dim() != train.dim() {
            return Err(HdoError::config(
                "data.validation_path",
                format!("validation data has {} features, training data {}", v.dim(), train.dim()),
            ));
        }
    }
    Ok(Problem {
        objective: classification(objective, &train)?,
        validation,
    })
}

/// Shared starting point of every agent in every cell.
pub fn initial_point(cfg: &ExperimentConfig, dim: usize) -> Vec<f64> {
    if cfg.init_scale == 0.0 {
        return vec![0.0; dim];
    }
    let mut r = rng::stream(cfg.master_seed, &[rng::purpose::INIT]);
    (0..dim)
        .map(|_| cfg.init_scale * r.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Run seed of one (population, seed) cell.
pub fn cell_seed(master: u64, seed: u64, population: usize) -> u64 {
    rng::derive_seed(master, &[seed, population as u64])
}

/// Data shards depend only on the seed, so every population of a grid sees
/// the same split for a given seed.
pub fn partition_seed(master: u64, seed: u64) -> u64 {
    rng::derive_seed(master, &[seed, rng::purpose::PARTITION])
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub population: usize,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub final_mu: Vec<f64>,
}

pub fn run_cell(cfg: &ExperimentConfig, problem: &Problem, population: usize, seed: u64) -> Result<CellResult> {
    let spec = cfg
        .populations
        .get(population)
        .ok_or_else(|| HdoError::invalid(format!("no population with index {population}")))?;
    let obj = &problem.objective;
    let pcfg = spec.population_config(cfg.steps, cfg.scheduler, cell_seed(cfg.master_seed, seed, population));
    let partition = partition_indices(
        obj.num_samples(),
        spec.n0,
        spec.n1,
        cfg.shard_mode,
        partition_seed(cfg.master_seed, seed),
    )?;
    let mut pop = init_population(&pcfg, obj, &partition, &initial_point(cfg, obj.dim()))?;
    let opts = RunOptions {
        metric_cadence: cfg.metric_cadence,
        validation: problem.validation.as_ref().map(|v| v as &dyn StochasticObjective),
        sample_mtg: cfg.sample_mtg,
        ..RunOptions::default()
    };
    let result = run(&mut pop, obj, &pcfg, &opts, &mut ())?;
    Ok(CellResult {
        population,
        seed,
        records: result.records,
        final_mu: result.final_mu,
    })
}

/// Hex SHA-256 of `"blob <len>\0" + bytes`, the git object-hash layout.
pub fn git_blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub crate_version: String,
    pub created_unix: u64,
    pub config: ExperimentConfig,
    pub outputs: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn seed_csv_name(label: &str, seed: u64) -> String {
    format!("{label}_seed{seed}.csv")
}

pub fn aggregate_csv_name(label: &str) -> String {
    format!("{label}_aggregate.csv")
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub seed_files: Vec<PathBuf>,
    pub aggregate_files: Vec<PathBuf>,
    pub manifest: PathBuf,
    pub cells: Vec<CellResult>,
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HdoError::io(dir, e))
}

/// Run every (population, seed) cell, write one CSV per cell, one aggregate
/// per population and the manifest. Cells run on the global rayon pool, or
/// on a dedicated pool when `threads` is given.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    if cfg.populations.is_empty() {
        return Err(HdoError::config("population", "at least one [[population]] is required"));
    }
    let problem = build_problem(cfg)?;
    let dir = cfg.output_dir();
    create_dir(&dir)?;

    let grid: Vec<(usize, u64)> = (0..cfg.populations.len())
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let work = || {
        grid.par_iter()
            .map(|&(p, s)| {
                let cell = run_cell(cfg, &problem, p, s)?;
                let path = dir.join(seed_csv_name(&cfg.populations[p].label, s));
                write_metrics_csv(&path, &cell.records)?;
                Ok((cell, path))
            })
            .collect::<Result<Vec<_>>>()
    };
    let done = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| HdoError::invalid(format!("cannot build thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let (cells, seed_files): (Vec<_>, Vec<_>) = done.into_iter().unzip();

    let mut aggregate_files = Vec::with_capacity(cfg.populations.len());
    for (p, spec) in cfg.populations.iter().enumerate() {
        let series: Vec<Vec<MetricsRecord>> = cells
            .iter()
            .filter(|c| c.population == p)
            .map(|c| c.records.clone())
            .collect();
        let path = dir.join(aggregate_csv_name(&spec.label));
        write_aggregate_csv(&path, &aggregate_seeds(&series)?)?;
        aggregate_files.push(path);
    }

    let manifest = dir.join(MANIFEST_FILE);
    write_manifest(cfg, &dir, seed_files.iter().chain(&aggregate_files), &manifest)?;
    Ok(ExperimentOutput {
        dir,
        seed_files,
        aggregate_files,
        manifest,
        cells,
    })
}

fn write_manifest<'a>(
    cfg: &ExperimentConfig,
    dir: &Path,
    files: impl Iterator<Item = &'a PathBuf>,
    path: &Path,
) -> Result<()> {
    let outputs = files
        .map(|f| {
            let bytes = std::fs::read(f).map_err(|e| HdoError::io(f, e))?;
            Ok(ManifestEntry {
                path: f.strip_prefix(dir).unwrap_or(f).display().to_string(),
                bytes: bytes.len() as u64,
                sha256: git_blob_sha256(&bytes),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        name: cfg.name.clone(),
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config: cfg.clone(),
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(path, text + "\n").map_err(|e| HdoError::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HdoError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HdoError::Format {
        row: e.line(),
        message: e.to_string(),
    })
}
