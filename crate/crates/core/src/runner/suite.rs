use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, VerifyConfig};
use crate::error::{HdoError, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::objectives::{
    make_logistic, make_nonconvex, partition_indices, synthetic_classification, ObjectiveSpec, QuadraticBuilder,
    ShardMode, StochasticObjective,
};
use crate::protocol::{init_population, step_uniform_pair, Agent, LrSchedule, NuCoupling, Population, PopulationConfig, SchedulerMode};
use crate::rng;
use crate::theory_checks::{
    check_bias_aggregate, check_gamma_recursion, check_gradcheck_all, check_smoothing,
    check_zo_second_moment, check_zo_variance_bound, probe_points,
    pure_averaging_gamma_enumerated, BoundCheckReport,
};

/// Regularization of the logistic instances used by the suite.
pub const SUITE_LAMBDA: f64 = 1e-3;
/// Label-flip rate of the suite's synthetic classification data.
pub const SUITE_LABEL_NOISE: f64 = 0.1;
/// Batch size of the estimators whose moments are checked.
pub const SUITE_BATCH: usize = 2;
/// Random directions of the gamma-recursion population's ZO agents.
pub const SUITE_GAMMA_RV: usize = 16;
/// Scheduler steps before the first gamma snapshot and between snapshots.
pub const SNAPSHOT_BURN_IN: u64 = 50;
pub const SNAPSHOT_SPACING: u64 = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub master_seed: u64,
    pub all_pass: bool,
    pub checks: Vec<BoundCheckReport>,
}

impl SuiteReport {
    pub fn failures(&self) -> impl Iterator<Item = &BoundCheckReport> {
        self.checks.iter().filter(|c| !c.pass)
    }

    /// One line per check, then a totals line.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(
                out,
                "{} {:<60} measured={:.6e} bound={:.6e} stderr={:.3e}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.bound,
                c.stderr
            );
        }
        let failed = self.failures().count();
        let _ = writeln!(out, "{} checks, {} failed", self.checks.len(), failed);
        out
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| HdoError::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HdoError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HdoError::Format {
            row: e.line(),
            message: e.to_string(),
        })
    }
}

pub const REPORT_FILE: &str = "theory_report.json";

fn tagged(mut r: BoundCheckReport, tag: &str) -> BoundCheckReport {
    r.name = format!("{}[{tag}]", r.name);
    r
}

/// Instances of one dimension shared by several checks.
struct Instances {
    quadratic: ObjectiveSpec,
    logistic: ObjectiveSpec,
    nonconvex: ObjectiveSpec,
}

fn instances(v: &VerifyConfig, d: usize, seed: u64) -> Result<Instances> {
    let data = synthetic_classification(
        v.logistic_samples,
        d,
        SUITE_LABEL_NOISE,
        rng::derive_seed(seed, &[rng::purpose::DATA]),
    )?;
    Ok(Instances {
        quadratic: QuadraticBuilder::new(d, v.cond, rng::derive_seed(seed, &[rng::purpose::INIT])).build()?,
        logistic: make_logistic(&data, SUITE_LAMBDA)?,
        nonconvex: make_nonconvex(&data)?,
    })
}

/// A single-agent zeroth-order oracle over the full data, as used by the
/// moment checks.
fn moment_agent(obj: &dyn StochasticObjective, nu: f64, x: &[f64]) -> Agent {
    Agent::new(
        x.to_vec(),
        EstimatorConfig::zeroth_order(EstimatorKind::ZoBiasedOneSided, 1, nu, SUITE_BATCH),
        (0..obj.num_samples()).collect(),
        rng::stream(0, &[]),
    )
}

fn worst_over_probes(
    name: &str,
    tag: &str,
    probes: &[Vec<f64>],
    mut check: impl FnMut(&[f64], u64) -> Result<BoundCheckReport>,
    seed: u64,
) -> Result<BoundCheckReport> {
    let reports = probes
        .iter()
        .enumerate()
        .map(|(k, x)| check(x, rng::derive_seed(seed, &[k as u64])))
        .collect::<Result<Vec<_>>>()?;
    let worst = BoundCheckReport::worst(name, reports).expect("probes are non-empty");
    Ok(tagged(worst, tag))
}

fn hybrid_population(obj: &ObjectiveSpec, v: &VerifyConfig, n0: usize, n1: usize, seed: u64) -> Result<(Population, PopulationConfig)> {
    let cfg = PopulationConfig {
        n0,
        n1,
        zo_estimator: EstimatorConfig::zeroth_order(EstimatorKind::ZoUnbiasedForward, SUITE_GAMMA_RV, 1e-3, SUITE_BATCH),
        fo_estimator: EstimatorConfig::first_order(SUITE_BATCH),
        schedule: LrSchedule::constant(v.eta),
        momentum: 0.0,
        scheduler: SchedulerMode::UniformPair,
        steps: 0,
        nu_coupling: NuCoupling::SqrtDim,
        seed,
    };
    let partition = partition_indices(obj.num_samples(), n0, n1, ShardMode::PerSubpopulation, seed)?;
    let x0 = vec![0.0; obj.dim()];
    Ok((init_population(&cfg, obj, &partition, &x0)?, cfg))
}

/// Spread the agents of `pop` over distinct probe points.
fn scatter(pop: &mut Population, obj: &ObjectiveSpec, seed: u64) {
    let points = probe_points(obj, pop.n(), seed);
    for (a, p) in pop.agents_mut().iter_mut().zip(points) {
        a.model = p;
    }
}

/// Run every bound check over the grid described by `cfg.verify` (defaults
/// when absent). Individual checks that fail still produce a report; only
/// invalid inputs abort the suite.
pub fn run_theory_suite(cfg: &ExperimentConfig) -> Result<SuiteReport> {
    let v = cfg.verify.clone().unwrap_or_default();
    v.validate()?;
    let master = cfg.master_seed;
    let mut checks = Vec::new();

    for &d in &v.dims {
        let seed_d = rng::derive_seed(master, &[d as u64]);
        let inst = instances(&v, d, seed_d)?;
        let objectives: [(&str, &ObjectiveSpec); 2] = [("quadratic", &inst.quadratic), ("logistic", &inst.logistic)];

        for (oi, (kind, obj)) in objectives.iter().enumerate() {
            let probes = probe_points(*obj, v.probes, rng::derive_seed(seed_d, &[rng::purpose::PROBES, oi as u64]));
            for (ni, &base) in v.nus.iter().enumerate() {
                let nu = base * v.nu_scale;
                let tag = format!("{kind},d={d},nu={nu}");
                let seed = rng::derive_seed(seed_d, &[oi as u64, ni as u64]);
                let (gap, bias) = check_smoothing(*obj, nu, &probes, v.mc_samples, seed)?;
                checks.push(tagged(gap, &tag));
                checks.push(tagged(bias, &tag));
                checks.push(worst_over_probes(
                    "zo_second_moment",
                    &tag,
                    &probes,
                    |x, s| check_zo_second_moment(*obj, &moment_agent(*obj, nu, x), nu, x, v.moment_samples, s),
                    seed,
                )?);
                checks.push(worst_over_probes(
                    "zo_variance",
                    &tag,
                    &probes,
                    |x, s| check_zo_variance_bound(*obj, &moment_agent(*obj, nu, x), nu, x, v.moment_samples, s),
                    seed,
                )?);
            }
        }

        let seed = rng::derive_seed(seed_d, &[rng::purpose::AGENT]);
        let (mut pop, _) = hybrid_population(&inst.logistic, &v, v.gamma_n0, v.gamma_n1, seed)?;
        scatter(&mut pop, &inst.logistic, seed);
        let c = (d as f64).sqrt();
        let report = check_bias_aggregate(&pop, &inst.logistic, v.eta, c, v.moment_samples, seed)?;
        checks.push(tagged(report, &format!("logistic,d={d},eta={}", v.eta)));

        checks.extend(gamma_snapshots(&inst.quadratic, &v, d, rng::derive_seed(seed_d, &[rng::purpose::REPLICA]))?);

        for (kind, obj) in [("quadratic", &inst.quadratic), ("logistic", &inst.logistic), ("nonconvex", &inst.nonconvex)] {
            let seed = rng::derive_seed(seed_d, &[rng::purpose::PROBES, 99]);
            checks.push(tagged(check_gradcheck_all(obj, v.gradcheck_points, seed)?, &format!("{kind},d={d}")));
        }
    }

    let d = v.dims[0];
    let quad = instances(&v, d, rng::derive_seed(master, &[d as u64]))?.quadratic;
    for n in [3usize, 4, 5] {
        let seed = rng::derive_seed(master, &[rng::purpose::REPLICA, n as u64]);
        let (mut pop, _) = hybrid_population(&quad, &v, n / 2, n - n / 2, seed)?;
        scatter(&mut pop, &quad, seed);
        checks.push(tagged(pure_averaging_gamma_enumerated(&pop), &format!("n={n}")));
    }

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        name: cfg.name.clone(),
        master_seed: master,
        all_pass,
        checks,
    })
}

/// Gamma recursion from `gamma_snapshots` frozen states of one uniform-pair
/// training run, taken after a burn-in and then at a fixed spacing.
fn gamma_snapshots(obj: &ObjectiveSpec, v: &VerifyConfig, d: usize, seed: u64) -> Result<Vec<BoundCheckReport>> {
    let (mut pop, cfg) = hybrid_population(obj, v, v.gamma_n0, v.gamma_n1, seed)?;
    scatter(&mut pop, obj, seed);
    let mut sched = rng::stream(seed, &[rng::purpose::SCHEDULER]);
    let mut out = Vec::with_capacity(v.gamma_snapshots);
    for k in 0..v.gamma_snapshots {
        let advance = if k == 0 { SNAPSHOT_BURN_IN } else { SNAPSHOT_SPACING };
        for _ in 0..advance {
            step_uniform_pair(&mut pop, obj, &cfg.schedule, &mut sched)?;
        }
        let report = check_gamma_recursion(&pop, obj, v.eta, v.gamma_replicas, rng::derive_seed(seed, &[k as u64]))?;
        out.push(tagged(report, &format!("quadratic,d={d},n={},snapshot={k}", pop.n())));
    }
    Ok(out)
}
