//! Gradient-estimator oracles.
//!
//! First-order agents see a minibatch stochastic gradient. Zeroth-order
//! agents build estimates from Gaussian directions `u ~ N(0, I_d)` and either
//! function-value differences (the biased one-sided and central estimators,
//! unbiased for the gradient of the Gaussian-smoothed objective) or
//! directional derivatives `uᵀ∇F` (the unbiased forward-mode estimator).
//! Each call draws one minibatch shared by all `rv` directions and returns
//! the plain mean over directions.
//!
//! Cost accounting (`function_evals`) is a simulator convention: one
//! per-sample function value, per-sample directional derivative or
//! per-sample gradient each count as one evaluation.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HdoError, Result};
use crate::objectives::StochasticObjective;
use crate::vector::axpy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    FirstOrder,
    ZoBiasedOneSided,
    ZoBiasedCentral,
    ZoUnbiasedForward,
}

impl EstimatorKind {
    pub fn is_zeroth_order(self) -> bool {
        self != EstimatorKind::FirstOrder
    }

    /// Whether the estimator targets the smoothed gradient `∇f_ν`.
    pub fn is_biased(self) -> bool {
        matches!(self, EstimatorKind::ZoBiasedOneSided | EstimatorKind::ZoBiasedCentral)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Number of Gaussian directions averaged per estimate.
    pub rv: usize,
    /// Smoothing radius; only read by the biased kinds.
    pub nu: f64,
    pub batch_size: usize,
}

impl EstimatorConfig {
    pub fn first_order(batch_size: usize) -> Self {
        Self {
            kind: EstimatorKind::FirstOrder,
            rv: 1,
            nu: 0.0,
            batch_size,
        }
    }

    pub fn zeroth_order(kind: EstimatorKind, rv: usize, nu: f64, batch_size: usize) -> Self {
        Self {
            kind,
            rv,
            nu,
            batch_size,
        }
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(HdoError::invalid("batch_size must be at least 1"));
        }
        if self.rv == 0 {
            return Err(HdoError::invalid("rv must be at least 1"));
        }
        if self.kind.is_biased() && !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(HdoError::invalid(format!("smoothing radius nu must be positive, got {}", self.nu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    pub kind: EstimatorKind,
    pub function_evals: u64,
}

/// Uniform minibatch drawn without replacement from `shard`; the whole
/// shard (without consuming randomness) when `batch_size >= shard.len()`.
pub fn sample_batch<R: Rng + ?Sized>(shard: &[usize], batch_size: usize, rng: &mut R) -> Vec<usize> {
    if batch_size >= shard.len() {
        return shard.to_vec();
    }
    sample(rng, shard.len(), batch_size).into_iter().map(|i| shard[i]).collect()
}

fn prepare<O, R>(obj: &O, shard: &[usize], x: &[f64], cfg: &EstimatorConfig, rng: &mut R) -> Result<Vec<usize>>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    cfg.validate()?;
    check_dim(obj.dim(), x.len())?;
    if shard.is_empty() {
        return Err(HdoError::invalid("agent shard is empty"));
    }
    let m = obj.num_samples();
    if let Some(&bad) = shard.iter().find(|&&k| k >= m) {
        return Err(HdoError::invalid(format!("shard index {bad} out of range (0..{m})")));
    }
    Ok(sample_batch(shard, cfg.batch_size, rng))
}

fn fill_gaussian<R: Rng + ?Sized>(u: &mut [f64], rng: &mut R) {
    u.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
}

pub fn estimate_first_order<O, R>(obj: &O, shard: &[usize], x: &[f64], batch_size: usize, rng: &mut R) -> Result<GradientEstimate>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    let cfg = EstimatorConfig::first_order(batch_size);
    let batch = prepare(obj, shard, x, &cfg, rng)?;
    let mut g = vec![0.0; obj.dim()];
    obj.batch_gradient_into(x, &batch, &mut g);
    Ok(GradientEstimate {
        vector: g,
        kind: EstimatorKind::FirstOrder,
        function_evals: batch.len() as u64,
    })
}

/// `(1/rv) Σ_k [(F(x+νu_k, ξ) − F(x, ξ)) / ν] u_k`
pub fn estimate_zo_one_sided<O, R>(obj: &O, shard: &[usize], x: &[f64], cfg: &EstimatorConfig, rng: &mut R) -> Result<GradientEstimate>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    let batch = prepare(obj, shard, x, cfg, rng)?;
    let d = obj.dim();
    let nu = cfg.nu;
    let base = obj.batch_loss(x, &batch);
    let mut g = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut probe = vec![0.0; d];
    for _ in 0..cfg.rv {
        fill_gaussian(&mut u, rng);
        for ((p, xi), ui) in probe.iter_mut().zip(x).zip(&u) {
            *p = xi + nu * ui;
        }
        let coef = (obj.batch_loss(&probe, &batch) - base) / nu;
        axpy(coef, &u, &mut g);
    }
    g.iter_mut().for_each(|v| *v /= cfg.rv as f64);
    Ok(GradientEstimate {
        vector: g,
        kind: EstimatorKind::ZoBiasedOneSided,
        function_evals: (batch.len() * (cfg.rv + 1)) as u64,
    })
}

/// `(1/rv) Σ_k [(F(x+νu_k, ξ) − F(x−νu_k, ξ)) / 2ν] u_k`
pub fn estimate_zo_central<O, R>(obj: &O, shard: &[usize], x: &[f64], cfg: &EstimatorConfig, rng: &mut R) -> Result<GradientEstimate>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    let batch = prepare(obj, shard, x, cfg, rng)?;
    let d = obj.dim();
    let nu = cfg.nu;
    let mut g = vec![0.0; d];
    let mut u = vec![0.0; d];
    let mut plus = vec![0.0; d];
    let mut minus = vec![0.0; d];
    for _ in 0..cfg.rv {
        fill_gaussian(&mut u, rng);
        for j in 0..d {
            plus[j] = x[j] + nu * u[j];
            minus[j] = x[j] - nu * u[j];
        }
        let coef = (obj.batch_loss(&plus, &batch) - obj.batch_loss(&minus, &batch)) / (2.0 * nu);
        axpy(coef, &u, &mut g);
    }
    g.iter_mut().for_each(|v| *v /= cfg.rv as f64);
    Ok(GradientEstimate {
        vector: g,
        kind: EstimatorKind::ZoBiasedCentral,
        function_evals: (batch.len() * 2 * cfg.rv) as u64,
    })
}

/// `(1/rv) Σ_k (u_kᵀ∇F(x, ξ)) u_k`, with each `u_kᵀ∇F` obtained from the
/// objective's directional derivative.
pub fn estimate_zo_unbiased_forward<O, R>(obj: &O, shard: &[usize], x: &[f64], cfg: &EstimatorConfig, rng: &mut R) -> Result<GradientEstimate>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    let batch = prepare(obj, shard, x, cfg, rng)?;
    let d = obj.dim();
    let mut g = vec![0.0; d];
    let mut u = vec![0.0; d];
    for _ in 0..cfg.rv {
        fill_gaussian(&mut u, rng);
        let coef = obj.batch_directional(x, &batch, &u);
        axpy(coef, &u, &mut g);
    }
    g.iter_mut().for_each(|v| *v /= cfg.rv as f64);
    Ok(GradientEstimate {
        vector: g,
        kind: EstimatorKind::ZoUnbiasedForward,
        function_evals: (batch.len() * cfg.rv) as u64,
    })
}

/// Dispatch on `cfg.kind`.
pub fn estimate<O, R>(obj: &O, shard: &[usize], x: &[f64], cfg: &EstimatorConfig, rng: &mut R) -> Result<GradientEstimate>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    match cfg.kind {
        EstimatorKind::FirstOrder => estimate_first_order(obj, shard, x, cfg.batch_size, rng),
        EstimatorKind::ZoBiasedOneSided => estimate_zo_one_sided(obj, shard, x, cfg, rng),
        EstimatorKind::ZoBiasedCentral => estimate_zo_central(obj, shard, x, cfg, rng),
        EstimatorKind::ZoUnbiasedForward => estimate_zo_unbiased_forward(obj, shard, x, cfg, rng),
    }
}

/// Smoothing radius tied to the learning rate: `ν = η / c`.
pub fn couple_nu(eta: f64, c: f64) -> Result<f64> {
    if !(eta > 0.0) || !(c > 0.0) || !eta.is_finite() || !c.is_finite() {
        return Err(HdoError::invalid(format!("couple_nu needs eta > 0 and c > 0 (eta={eta}, c={c})")));
    }
    Ok(eta / c)
}
