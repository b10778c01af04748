use serde::{Deserialize, Serialize};

use crate::error::{HdoError, Result};

/// Learning-rate schedule indexed by scheduler step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        eta: f64,
    },
    /// Linear ramp from 0 to `eta_max` over `warmup_steps`, then cosine
    /// annealing from `eta_max` down to `eta_min` at `total_steps`.
    WarmupCosine {
        eta_max: f64,
        eta_min: f64,
        warmup_steps: u64,
        total_steps: u64,
    },
}

impl LrSchedule {
    pub fn constant(eta: f64) -> Self {
        LrSchedule::Constant { eta }
    }

    pub fn eta_max(&self) -> f64 {
        match *self {
            LrSchedule::Constant { eta } => eta,
            LrSchedule::WarmupCosine { eta_max, .. } => eta_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LrSchedule::Constant { eta } => {
                if !(eta >= 0.0) || !eta.is_finite() {
                    return Err(HdoError::invalid(format!("learning rate must be >= 0, got {eta}")));
                }
            }
            LrSchedule::WarmupCosine {
                eta_max, eta_min, ..
            } => {
                if !(eta_min >= 0.0) || !(eta_max >= eta_min) || !eta_max.is_finite() {
                    return Err(HdoError::invalid(format!(
                        "cosine schedule needs 0 <= eta_min <= eta_max (got {eta_min}, {eta_max})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eta_at(&self, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant { eta } => eta,
            LrSchedule::WarmupCosine {
                eta_max,
                eta_min,
                warmup_steps,
                total_steps,
            } => {
                if step < warmup_steps {
                    return eta_max * step as f64 / warmup_steps as f64;
                }
                let span = total_steps.saturating_sub(warmup_steps);
                let progress = if span == 0 {
                    1.0
                } else {
                    ((step - warmup_steps) as f64 / span as f64).min(1.0)
                };
                eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (std::f64::consts::PI * progress).cos())
            }
        }
    }
}
