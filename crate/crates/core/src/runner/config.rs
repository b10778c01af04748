//! Experiment configuration files (TOML).
//!
//! ```toml
//! name = "example"
//! seeds = [0, 1, 2]
//! steps = 500
//! scheduler = "random_matching"
//!
//! [objective]
//! kind = "logistic_l2"
//! lambda = 0.001
//!
//! [data]
//! source = "synthetic"
//! samples = 2000
//! dim = 20
//!
//! [[population]]
//! label = "hybrid"
//! n0 = 16
//! n1 = 4
//! eta = 0.01
//! zo = { kind = "zo_unbiased_forward", rv = 128, batch_size = 2 }
//! fo = { batch_size = 2 }
//! ```
//!
//! Unknown keys are rejected everywhere. Omitted keys take the defaults of
//! the desk-scale regression setup: learning rate 0.01, batch size 2,
//! 128 random directions, 500 steps, no momentum, constant schedule,
//! metrics every 10 steps and seeds `0..10`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{HdoError, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::objectives::ShardMode;
use crate::protocol::{LrSchedule, NuCoupling, PopulationConfig, SchedulerMode};

pub const DEFAULT_ETA: f64 = 0.01;
pub const DEFAULT_BATCH: usize = 2;
pub const DEFAULT_RV: usize = 128;
pub const DEFAULT_STEPS: u64 = 500;
pub const DEFAULT_CADENCE: u64 = 10;
pub const DEFAULT_SEED_COUNT: u64 = 10;

fn default_seeds() -> Vec<u64> {
    (0..DEFAULT_SEED_COUNT).collect()
}
fn default_steps() -> u64 {
    DEFAULT_STEPS
}
fn default_cadence() -> u64 {
    DEFAULT_CADENCE
}
fn default_scheduler() -> SchedulerMode {
    SchedulerMode::RandomMatching
}
fn default_batch() -> usize {
    DEFAULT_BATCH
}
fn default_rv() -> usize {
    DEFAULT_RV
}
fn default_zo_kind() -> EstimatorKind {
    EstimatorKind::ZoUnbiasedForward
}
fn default_nu() -> f64 {
    1e-3
}
fn default_cond() -> f64 {
    10.0
}
fn default_quadratic_samples() -> usize {
    256
}
fn default_noise() -> f64 {
    1.0
}
fn default_lambda() -> f64 {
    1e-3
}
fn default_train_samples() -> usize {
    2000
}
fn default_dim() -> usize {
    20
}
fn default_label_noise() -> f64 {
    0.1
}
fn default_validation_samples() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_steps")]
    pub steps: u64,
    #[serde(default = "default_cadence")]
    pub metric_cadence: u64,
    #[serde(default = "default_scheduler")]
    pub scheduler: SchedulerMode,
    /// Defaults to `out/<name>`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub shard_mode: ShardMode,
    /// Standard deviation of the shared random starting point (0: origin).
    #[serde(default)]
    pub init_scale: f64,
    #[serde(default)]
    pub sample_mtg: bool,
    /// Required when the file lists populations; `verify` builds its own
    /// instances.
    #[serde(default)]
    pub objective: Option<ObjectiveConfig>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(rename = "population", default)]
    pub populations: Vec<PopulationSpec>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveConfig {
    Quadratic {
        dim: usize,
        #[serde(default = "default_cond")]
        cond: f64,
        #[serde(default = "default_quadratic_samples")]
        samples: usize,
        #[serde(default = "default_noise")]
        noise: f64,
        /// Defaults to the master seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    LogisticL2 {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    SigmoidSqNonconvex {},
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Linearly separable Gaussian data with label flips; the validation
    /// split is drawn from the same generator.
    Synthetic {
        #[serde(default = "default_train_samples")]
        samples: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_label_noise")]
        label_noise: f64,
        #[serde(default = "default_validation_samples")]
        validation_samples: usize,
        /// Defaults to the master seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
        #[serde(default)]
        validation_path: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoSpec {
    #[serde(default = "default_zo_kind")]
    pub kind: EstimatorKind,
    #[serde(default = "default_rv")]
    pub rv: usize,
    /// Radius for biased estimators when `nu_coupling = "fixed"`.
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl Default for ZoSpec {
    fn default() -> Self {
        Self {
            kind: default_zo_kind(),
            rv: DEFAULT_RV,
            nu: default_nu(),
            batch_size: DEFAULT_BATCH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoSpec {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

impl Default for FoSpec {
    fn default() -> Self {
        Self {
            batch_size: DEFAULT_BATCH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationSpec {
    pub label: String,
    pub n0: usize,
    pub n1: usize,
    /// Constant learning rate; mutually exclusive with `schedule`.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub schedule: Option<LrSchedule>,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub nu_coupling: NuCoupling,
    #[serde(default)]
    pub zo: ZoSpec,
    #[serde(default)]
    pub fo: FoSpec,
}

impl PopulationSpec {
    pub fn schedule(&self) -> LrSchedule {
        self.schedule
            .unwrap_or_else(|| LrSchedule::constant(self.eta.unwrap_or(DEFAULT_ETA)))
    }

    /// Protocol configuration for one run with the given derived seed.
    pub fn population_config(&self, steps: u64, scheduler: SchedulerMode, seed: u64) -> PopulationConfig {
        PopulationConfig {
            n0: self.n0,
            n1: self.n1,
            zo_estimator: EstimatorConfig::zeroth_order(self.zo.kind, self.zo.rv, self.zo.nu, self.zo.batch_size),
            fo_estimator: EstimatorConfig::first_order(self.fo.batch_size),
            schedule: self.schedule(),
            momentum: self.momentum,
            scheduler,
            steps,
            nu_coupling: self.nu_coupling,
            seed,
        }
    }
}

fn default_dims() -> Vec<usize> {
    vec![5, 20]
}
fn default_nus() -> Vec<f64> {
    vec![0.01, 0.1]
}
fn default_one() -> f64 {
    1.0
}
fn default_probes() -> usize {
    10
}
fn default_mc_samples() -> u64 {
    1_000_000
}
fn default_moment_samples() -> u64 {
    100_000
}
fn default_snapshots() -> usize {
    20
}
fn default_replicas() -> u64 {
    2000
}
fn default_gamma_n0() -> usize {
    4
}
fn default_gamma_n1() -> usize {
    4
}
fn default_verify_eta() -> f64 {
    0.05
}
fn default_gradcheck_points() -> usize {
    100
}
fn default_logistic_samples() -> usize {
    32
}

/// Parameters of the bound-checking suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_dims")]
    pub dims: Vec<usize>,
    #[serde(default = "default_nus")]
    pub nus: Vec<f64>,
    /// Multiplies every radius in `nus`.
    #[serde(default = "default_one")]
    pub nu_scale: f64,
    #[serde(default = "default_probes")]
    pub probes: usize,
    /// Draws per probe for the smoothing checks.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: u64,
    /// Draws per probe for the estimator-moment and bias checks.
    #[serde(default = "default_moment_samples")]
    pub moment_samples: u64,
    #[serde(default = "default_snapshots")]
    pub gamma_snapshots: usize,
    #[serde(default = "default_replicas")]
    pub gamma_replicas: u64,
    #[serde(default = "default_gamma_n0")]
    pub gamma_n0: usize,
    #[serde(default = "default_gamma_n1")]
    pub gamma_n1: usize,
    #[serde(default = "default_verify_eta")]
    pub eta: f64,
    #[serde(default = "default_gradcheck_points")]
    pub gradcheck_points: usize,
    /// Training samples of the synthetic logistic instance.
    #[serde(default = "default_logistic_samples")]
    pub logistic_samples: usize,
    #[serde(default = "default_cond")]
    pub cond: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        toml::from_str("").expect("all verify fields have defaults")
    }
}

/// Best-effort key path for a TOML error: the backquoted name in serde's
/// message, else the `key = ` on the offending line, prefixed by the
/// enclosing table header.
fn toml_key(text: &str, err: &toml::de::Error) -> String {
    let message = err.message();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                let field = &rest[..end];
                return match err.span().and_then(|sp| table_at(text, sp.start)) {
                    Some(table) => format!("{table}.{field}"),
                    None => field.to_string(),
                };
            }
        }
    }
    let Some(span) = err.span() else {
        return "<document>".to_string();
    };
    let at = span.start.min(text.len());
    let line_start = text[..at].rfind('\n').map_or(0, |i| i + 1);
    let line = text[line_start..].lines().next().unwrap_or("");
    let key = line.split_once('=').map(|(k, _)| k.trim().trim_matches('"').to_string());
    match (table_at(text, at), key) {
        (Some(t), Some(k)) if !k.starts_with('[') => format!("{t}.{k}"),
        (None, Some(k)) if !k.starts_with('[') => k,
        (Some(t), _) => t,
        _ => "<document>".to_string(),
    }
}

fn table_at(text: &str, offset: usize) -> Option<String> {
    text[..offset.min(text.len())]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)
            .map_err(|e| HdoError::config(toml_key(text, &e), e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("out").join(&self.name))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(HdoError::config(key, msg));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name", format!("must be a non-empty file-name-safe string, got {:?}", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seeds", "at least one seed is required".into());
        }
        if self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return bad("seeds", "seeds must be distinct".into());
        }
        if self.metric_cadence == 0 {
            return bad("metric_cadence", "must be at least 1".into());
        }
        if !(self.init_scale >= 0.0) || !self.init_scale.is_finite() {
            return bad("init_scale", format!("must be finite and >= 0, got {}", self.init_scale));
        }
        self.validate_objective()?;
        let mut labels = HashSet::new();
        for (i, p) in self.populations.iter().enumerate() {
            let key = |field: &str| format!("population[{i}].{field}");
            if p.label.is_empty() || p.label.contains(['/', '\\']) {
                return bad(&key("label"), format!("must be a non-empty file-name-safe string, got {:?}", p.label));
            }
            if !labels.insert(p.label.as_str()) {
                return bad(&key("label"), format!("duplicate label {:?}", p.label));
            }
            if p.n0 + p.n1 < 2 {
                return bad(&key("n0"), format!("n0 + n1 must be at least 2 (n0={}, n1={})", p.n0, p.n1));
            }
            match (p.eta, p.schedule) {
                (Some(_), Some(_)) => return bad(&key("eta"), "give either eta or schedule, not both".into()),
                (Some(eta), None) if !(eta >= 0.0) || !eta.is_finite() => {
                    return bad(&key("eta"), format!("must be finite and >= 0, got {eta}"));
                }
                _ => {}
            }
            p.schedule()
                .validate()
                .map_err(|e| HdoError::config(key("schedule"), e.to_string()))?;
            if !(0.0..1.0).contains(&p.momentum) {
                return bad(&key("momentum"), format!("must lie in [0, 1), got {}", p.momentum));
            }
            if p.zo.rv == 0 {
                return bad(&key("zo.rv"), "must be at least 1".into());
            }
            if p.zo.batch_size == 0 {
                return bad(&key("zo.batch_size"), "must be at least 1".into());
            }
            if p.fo.batch_size == 0 {
                return bad(&key("fo.batch_size"), "must be at least 1".into());
            }
            if !p.zo.kind.is_zeroth_order() {
                return bad(&key("zo.kind"), "must be a zeroth-order estimator kind".into());
            }
            if !(p.zo.nu > 0.0) {
                return bad(&key("zo.nu"), format!("must be positive, got {}", p.zo.nu));
            }
            if let NuCoupling::Constant(c) = p.nu_coupling {
                if !(c > 0.0) {
                    return bad(&key("nu_coupling"), format!("constant must be positive, got {c}"));
                }
            }
        }
        if let Some(v) = &self.verify {
            v.validate()?;
        }
        Ok(())
    }

    fn validate_objective(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(HdoError::config(key, msg));
        let Some(objective) = &self.objective else {
            if !self.populations.is_empty() {
                return bad("objective", "populations need an [objective] section".into());
            }
            if self.data.is_some() {
                return bad("data", "a [data] section needs an [objective] section".into());
            }
            return Ok(());
        };
        match (objective, &self.data) {
            (ObjectiveConfig::Quadratic { dim, cond, samples, noise, .. }, data) => {
                if data.is_some() {
                    return bad("data", "quadratic objectives generate their own samples".into());
                }
                if *dim == 0 {
                    return bad("objective.dim", "must be at least 1".into());
                }
                if !(*cond >= 1.0) {
                    return bad("objective.cond", format!("must be >= 1, got {cond}"));
                }
                if *samples == 0 {
                    return bad("objective.samples", "must be at least 1".into());
                }
                if !(*noise >= 0.0) {
                    return bad("objective.noise", format!("must be >= 0, got {noise}"));
                }
            }
            (_, None) => return bad("data", "classification objectives need a [data] section".into()),
            (obj, Some(data)) => {
                if let ObjectiveConfig::LogisticL2 { lambda } = obj {
                    if !(*lambda > 0.0) {
                        return bad("objective.lambda", format!("must be positive, got {lambda}"));
                    }
                }
                if let DataConfig::Synthetic { samples, dim, label_noise, .. } = data {
                    if *samples < 2 {
                        return bad("data.samples", "must be at least 2".into());
                    }
                    if *dim == 0 {
                        return bad("data.dim", "must be at least 1".into());
                    }
                    if !(0.0..=0.5).contains(label_noise) {
                        return bad("data.label_noise", format!("must lie in [0, 0.5], got {label_noise}"));
                    }
                }
            }
        }
        Ok(())
    }
}

impl VerifyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: String| Err(HdoError::config(format!("verify.{key}"), msg));
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dims", "need at least one positive dimension".into());
        }
        if self.nus.is_empty() || self.nus.iter().any(|&nu| !(nu > 0.0)) {
            return bad("nus", "need at least one positive radius".into());
        }
        if !(self.nu_scale > 0.0) {
            return bad("nu_scale", format!("must be positive, got {}", self.nu_scale));
        }
        if self.probes == 0 {
            return bad("probes", "must be at least 1".into());
        }
        if self.mc_samples < 2 || self.moment_samples < 2 {
            return bad("mc_samples", "Monte-Carlo checks need at least two samples".into());
        }
        if self.gamma_replicas < crate::theory_checks::MIN_GAMMA_REPLICAS {
            return bad(
                "gamma_replicas",
                format!("must be at least {}", crate::theory_checks::MIN_GAMMA_REPLICAS),
            );
        }
        if self.gamma_n0 + self.gamma_n1 < 2 {
            return bad("gamma_n0", "gamma population needs at least two agents".into());
        }
        if !(self.eta > 0.0) {
            return bad("eta", format!("must be positive, got {}", self.eta));
        }
        if self.logistic_samples < 2 {
            return bad("logistic_samples", "must be at least 2".into());
        }
        if !(self.cond >= 1.0) {
            return bad("cond", format!("must be >= 1, got {}", self.cond));
        }
        Ok(())
    }
}

/// Read and validate a config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| HdoError::config(path.display().to_string(), e.to_string()))?;
    ExperimentConfig::from_toml_str(&text)
}
