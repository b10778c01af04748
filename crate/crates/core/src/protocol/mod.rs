//! Agent state, population construction and the pairwise HDO dynamics.

mod interact;
mod run;
mod schedule;
mod scheduler;

pub(crate) use interact::effective_config;
pub use interact::{average_pair, hdo_interact, local_step, PairUpdate, StepParams};
pub use run::{run, MetricsSink, RunOptions, RunResult, TargetHit};
pub use schedule::LrSchedule;
pub use scheduler::{
    execute_pairs, random_matching, step_matching, step_uniform_pair, uniform_pair, InteractionEvent, Matching,
};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HdoError, Result};
use crate::estimators::{couple_nu, EstimatorConfig};
use crate::objectives::{DataPartition, StochasticObjective};
use crate::rng::{self, SimRng};

/// One participant: its model `X^i`, oracle, data shard, momentum buffer and
/// private rng stream.
#[derive(Debug, Clone)]
pub struct Agent {
    pub model: Vec<f64>,
    pub estimator: EstimatorConfig,
    shard: Vec<usize>,
    momentum: Vec<f64>,
    interactions: u64,
    rng: SimRng,
}

impl Agent {
    pub fn new(model: Vec<f64>, estimator: EstimatorConfig, shard: Vec<usize>, rng: SimRng) -> Self {
        let d = model.len();
        Self {
            model,
            estimator,
            shard,
            momentum: vec![0.0; d],
            interactions: 0,
            rng,
        }
    }

    pub fn is_zeroth_order(&self) -> bool {
        self.estimator.kind.is_zeroth_order()
    }

    pub fn shard(&self) -> &[usize] {
        &self.shard
    }

    pub fn momentum_buffer(&self) -> &[f64] {
        &self.momentum
    }

    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    /// Replace the agent's rng stream (used to fork independent replicas).
    pub fn reseed(&mut self, rng: SimRng) {
        self.rng = rng;
    }
}

/// How the zeroth-order smoothing radius follows the learning rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuCoupling {
    /// `ν = η / √d`.
    #[default]
    SqrtDim,
    /// `ν = η / c`.
    Constant(f64),
    /// Use each agent's configured `nu` regardless of `η`.
    Fixed,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerMode {
    /// One uniformly random unordered pair per step.
    #[default]
    UniformPair,
    /// A uniformly random (near-)perfect matching per step.
    RandomMatching,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub n0: usize,
    pub n1: usize,
    pub zo_estimator: EstimatorConfig,
    pub fo_estimator: EstimatorConfig,
    pub schedule: LrSchedule,
    pub momentum: f64,
    pub scheduler: SchedulerMode,
    /// Number of scheduler steps `T`.
    pub steps: u64,
    pub nu_coupling: NuCoupling,
    pub seed: u64,
}

impl PopulationConfig {
    pub fn n(&self) -> usize {
        self.n0 + self.n1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n() < 2 {
            return Err(HdoError::invalid(format!(
                "population needs n0 + n1 >= 2 (n0={}, n1={})",
                self.n0, self.n1
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(HdoError::invalid(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        self.schedule.validate()?;
        if self.n0 > 0 {
            if !self.zo_estimator.kind.is_zeroth_order() {
                return Err(HdoError::invalid("zo_estimator must be a zeroth-order kind"));
            }
            let mut probe = self.zo_estimator;
            if probe.kind.is_biased() && self.nu_coupling != NuCoupling::Fixed {
                probe.nu = 1.0;
            }
            probe.validate()?;
        }
        if self.n1 > 0 {
            if self.fo_estimator.kind.is_zeroth_order() {
                return Err(HdoError::invalid("fo_estimator must be first_order"));
            }
            self.fo_estimator.validate()?;
        }
        if let NuCoupling::Constant(c) = self.nu_coupling {
            if !(c > 0.0) {
                return Err(HdoError::invalid(format!("nu coupling constant must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// All agents plus the global clocks.
#[derive(Debug, Clone)]
pub struct Population {
    agents: Vec<Agent>,
    n0: usize,
    momentum: f64,
    nu_coupling: NuCoupling,
    interactions: u64,
    steps: u64,
    function_evals: u64,
}

impl Population {
    /// Build a population from explicit agents; the first `n0` must be the
    /// zeroth-order ones.
    pub fn from_agents(agents: Vec<Agent>, momentum: f64, nu_coupling: NuCoupling) -> Result<Self> {
        if agents.len() < 2 {
            return Err(HdoError::invalid("population needs at least two agents"));
        }
        let d = agents[0].model.len();
        for a in &agents {
            check_dim(d, a.model.len())?;
        }
        let n0 = agents.iter().take_while(|a| a.is_zeroth_order()).count();
        if agents[n0..].iter().any(Agent::is_zeroth_order) {
            return Err(HdoError::invalid("zeroth-order agents must precede first-order agents"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(HdoError::invalid(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        Ok(Self {
            agents,
            n0,
            momentum,
            nu_coupling,
            interactions: 0,
            steps: 0,
            function_evals: 0,
        })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [Agent] {
        &mut self.agents
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n1(&self) -> usize {
        self.agents.len() - self.n0
    }

    pub fn dim(&self) -> usize {
        self.agents[0].model.len()
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }

    pub fn nu_coupling(&self) -> NuCoupling {
        self.nu_coupling
    }

    /// Fine-grained time: total pairwise interactions so far.
    pub fn interactions(&self) -> u64 {
        self.interactions
    }

    /// Scheduler steps so far (one pair, or one matching).
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Interactions divided by `n`.
    pub fn parallel_time(&self) -> f64 {
        self.interactions as f64 / self.n() as f64
    }

    pub fn function_evals(&self) -> u64 {
        self.function_evals
    }

    pub fn models(&self) -> impl Iterator<Item = &[f64]> {
        self.agents.iter().map(|a| a.model.as_slice())
    }

    /// Smoothing radius for biased estimators at learning rate `eta`, or
    /// `None` when agents keep their configured radius.
    pub fn nu_for(&self, eta: f64) -> Result<Option<f64>> {
        if eta == 0.0 {
            return Ok(None);
        }
        match self.nu_coupling {
            NuCoupling::SqrtDim => couple_nu(eta, (self.dim() as f64).sqrt()).map(Some),
            NuCoupling::Constant(c) => couple_nu(eta, c).map(Some),
            NuCoupling::Fixed => Ok(None),
        }
    }

    pub fn step_params(&self, eta: f64) -> Result<StepParams> {
        Ok(StepParams {
            eta,
            nu: self.nu_for(eta)?,
            momentum: self.momentum,
        })
    }

    /// Fork an independent copy whose agents draw from fresh rng streams
    /// derived from `seed`.
    pub fn fork(&self, seed: u64) -> Population {
        let mut p = self.clone();
        for (i, a) in p.agents.iter_mut().enumerate() {
            a.reseed(rng::stream(seed, &[rng::purpose::AGENT, i as u64]));
        }
        p
    }

    pub(crate) fn pair_mut(&mut self, i: usize, j: usize) -> (&mut Agent, &mut Agent) {
        assert!(i != j, "an agent cannot interact with itself");
        if i < j {
            let (lo, hi) = self.agents.split_at_mut(j);
            (&mut lo[i], &mut hi[0])
        } else {
            let (lo, hi) = self.agents.split_at_mut(i);
            (&mut hi[0], &mut lo[j])
        }
    }

    pub(crate) fn record_interaction(&mut self, evals: u64) {
        self.interactions += 1;
        self.function_evals += evals;
    }

    pub(crate) fn record_step(&mut self) {
        self.steps += 1;
    }
}

/// All agents start at `x0`; agents `0..n0` are zeroth-order with
/// `cfg.zo_estimator`, the rest first-order with `cfg.fo_estimator`. Agent
/// `i` draws from the stream `(cfg.seed, AGENT, i)`.
pub fn init_population<O: StochasticObjective + ?Sized>(
    cfg: &PopulationConfig,
    obj: &O,
    partition: &DataPartition,
    x0: &[f64],
) -> Result<Population> {
    cfg.validate()?;
    check_dim(obj.dim(), x0.len())?;
    if partition.n0() != cfg.n0 || partition.n1() != cfg.n1 {
        return Err(HdoError::invalid(format!(
            "partition has {}+{} shards but the population has {}+{} agents",
            partition.n0(),
            partition.n1(),
            cfg.n0,
            cfg.n1
        )));
    }
    let m = obj.num_samples();
    let agents = partition
        .shards()
        .enumerate()
        .map(|(i, shard)| {
            if shard.is_empty() || shard.iter().any(|&k| k >= m) {
                return Err(HdoError::invalid(format!("shard {i} is empty or out of range")));
            }
            let est = if i < cfg.n0 { cfg.zo_estimator } else { cfg.fo_estimator };
            Ok(Agent::new(
                x0.to_vec(),
                est,
                shard.clone(),
                rng::stream(cfg.seed, &[rng::purpose::AGENT, i as u64]),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Population::from_agents(agents, cfg.momentum, cfg.nu_coupling)
}
