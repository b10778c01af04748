use rand::seq::SliceRandom;

use super::Dataset;
use crate::error::{HdoError, Result};
use crate::rng;

/// How training samples are distributed over the two sub-populations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShardMode {
    /// Two full copies of the data: one split over the `n0` zeroth-order
    /// agents, the other over the `n1` first-order agents.
    #[default]
    PerSubpopulation,
    /// A single copy split over all `n0 + n1` agents.
    SingleCopy,
}

/// Sample-index shards for every agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPartition {
    pub zo_shards: Vec<Vec<usize>>,
    pub fo_shards: Vec<Vec<usize>>,
}

impl DataPartition {
    pub fn n0(&self) -> usize {
        self.zo_shards.len()
    }

    pub fn n1(&self) -> usize {
        self.fo_shards.len()
    }

    /// Shards in agent order: zeroth-order agents first.
    pub fn shards(&self) -> impl Iterator<Item = &Vec<usize>> {
        self.zo_shards.iter().chain(&self.fo_shards)
    }
}

pub fn partition_data(dataset: &Dataset, n0: usize, n1: usize, seed: u64) -> Result<DataPartition> {
    partition_indices(dataset.len(), n0, n1, ShardMode::PerSubpopulation, seed)
}

/// Balanced split of `0..num_samples` into per-agent shards.
pub fn partition_indices(
    num_samples: usize,
    n0: usize,
    n1: usize,
    mode: ShardMode,
    seed: u64,
) -> Result<DataPartition> {
    if n0 + n1 < 2 {
        return Err(HdoError::invalid(format!(
            "population needs at least two agents (n0={n0}, n1={n1})"
        )));
    }
    let shuffled = |copy: u64| {
        let mut idx: Vec<usize> = (0..num_samples).collect();
        idx.shuffle(&mut rng::stream(seed, &[rng::purpose::PARTITION, copy]));
        idx
    };
    match mode {
        ShardMode::PerSubpopulation => {
            if num_samples < n0.max(n1) {
                return Err(HdoError::invalid(format!(
                    "{num_samples} samples cannot fill {} non-empty shards",
                    n0.max(n1)
                )));
            }
            Ok(DataPartition {
                zo_shards: split_balanced(&shuffled(0), n0),
                fo_shards: split_balanced(&shuffled(1), n1),
            })
        }
        ShardMode::SingleCopy => {
            if num_samples < n0 + n1 {
                return Err(HdoError::invalid(format!(
                    "{num_samples} samples cannot fill {} non-empty shards",
                    n0 + n1
                )));
            }
            let mut all = split_balanced(&shuffled(0), n0 + n1);
            let fo_shards = all.split_off(n0);
            Ok(DataPartition {
                zo_shards: all,
                fo_shards,
            })
        }
    }
}

/// Contiguous split into `parts` chunks whose sizes differ by at most one;
/// the first `len % parts` chunks get the extra element.
fn split_balanced(items: &[usize], parts: usize) -> Vec<Vec<usize>> {
    if parts == 0 {
        return Vec::new();
    }
    let base = items.len() / parts;
    let extra = items.len() % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        out.push(items[start..start + size].to_vec());
        start += size;
    }
    out
}
