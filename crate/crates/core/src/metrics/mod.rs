//! Analysis quantities and experiment metrics computed from population
//! snapshots, plus per-seed aggregation and CSV output.

mod csv_io;

pub use csv_io::{read_metrics_csv, write_aggregate_csv, write_metrics_csv, METRICS_HEADER};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HdoError, Result};
use crate::estimators::estimate;
use crate::objectives::StochasticObjective;
use crate::protocol::{effective_config, Population, StepParams};
use crate::vector::{dist_sq, norm_sq};

/// One row of the metrics series. Optional fields are `None` when the
/// quantity is unavailable (unknown `f*`, no validation set, regression
/// objective) or was not sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Scheduler steps completed.
    pub step: u64,
    /// Interactions divided by `n`.
    pub parallel_time: f64,
    /// Learning rate in effect for the next step.
    pub eta: f64,
    pub gamma: f64,
    pub mu_loss_gap: Option<f64>,
    pub grad_norm_sq_mu: f64,
    pub mean_val_loss: Option<f64>,
    pub mean_val_acc: Option<f64>,
    pub mt_g: Option<f64>,
    pub function_evals_total: u64,
}

/// Mean model `μ = (1/n) Σ X^i`.
pub fn compute_mu(pop: &Population) -> Vec<f64> {
    mean_of(pop.models(), pop.dim())
}

pub(crate) fn mean_of<'a>(models: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut mu = vec![0.0; dim];
    let mut n = 0usize;
    for x in models {
        for (m, v) in mu.iter_mut().zip(x) {
            *m += v;
        }
        n += 1;
    }
    let inv = 1.0 / n as f64;
    mu.iter_mut().for_each(|m| *m *= inv);
    mu
}

/// Variance potential `Γ = (1/n) Σ ‖X^i − μ‖²`, evaluated through the
/// equivalent pairwise form `(1/n²) Σ_{i<j} ‖X^i − X^j‖²` so that equal
/// models give exactly zero.
pub fn compute_gamma(pop: &Population) -> f64 {
    let models: Vec<&[f64]> = pop.models().collect();
    let n = models.len() as f64;
    let mut total = 0.0;
    for (i, x) in models.iter().enumerate() {
        for y in &models[i + 1..] {
            total += dist_sq(x, y);
        }
    }
    total / (n * n)
}

/// `M^G = (1/n) Σ ‖G^i(X^i)‖²` with one fresh estimate per agent drawn from
/// `rng`; the agents' own streams are not touched.
pub fn compute_mtg<O, R>(pop: &Population, obj: &O, params: &StepParams, rng: &mut R) -> Result<f64>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    let mut total = 0.0;
    for a in pop.agents() {
        let cfg = effective_config(&a.estimator, params);
        total += norm_sq(&estimate(obj, a.shard(), &a.model, &cfg, rng)?.vector);
    }
    Ok(total / pop.n() as f64)
}

/// Population-averaged loss and accuracy of every agent's model on a
/// validation objective. Accuracy is `None` for regression objectives.
pub fn evaluate_validation<O: StochasticObjective + ?Sized>(pop: &Population, val: &O) -> Result<(f64, Option<f64>)> {
    if val.num_samples() == 0 {
        return Err(HdoError::invalid("validation set is empty"));
    }
    crate::error::check_dim(val.dim(), pop.dim())?;
    let n = pop.n() as f64;
    let mut loss = 0.0;
    let mut acc = Some(0.0);
    for x in pop.models() {
        loss += val.loss(x);
        acc = match (acc, val.accuracy(x)) {
            (Some(s), Some(a)) => Some(s + a),
            _ => None,
        };
    }
    Ok((loss / n, acc.map(|s| s / n)))
}

/// Exponentially weighted average `y_T = Σ_t w_t μ_{t−1} / S_T` with
/// `w_t = Π_{s≤t} (1 − η_s ℓ / 2n)^{−1}`.
///
/// Only the ratio `q_t = S_t / w_t` is stored, which satisfies
/// `q_t = q_{t−1}(1 − η_t ℓ / 2n) + 1` and stays bounded by `2n/(ηℓ)`,
/// so `w_t` itself never has to be formed.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAverageState {
    y: Vec<f64>,
    q: f64,
    log_w: f64,
    t: u64,
}

impl WeightedAverageState {
    pub fn new(dim: usize) -> Self {
        Self {
            y: vec![0.0; dim],
            q: 0.0,
            log_w: 0.0,
            t: 0,
        }
    }

    /// Fold in `μ_{t−1}` for the next index `t`.
    pub fn update(&mut self, mu_prev: &[f64], eta: f64, ell: f64, n: usize) -> Result<()> {
        if !(ell > 0.0) {
            return Err(HdoError::invalid(format!(
                "weighted average needs strong convexity ell > 0, got {ell}"
            )));
        }
        crate::error::check_dim(self.y.len(), mu_prev.len())?;
        let shrink = 1.0 - eta * ell / (2.0 * n as f64);
        if !(shrink > 0.0 && shrink <= 1.0) {
            return Err(HdoError::invalid(format!(
                "eta*ell/(2n) must lie in [0, 1), got {}",
                1.0 - shrink
            )));
        }
        self.q = self.q * shrink + 1.0;
        self.log_w -= shrink.ln();
        self.t += 1;
        let alpha = 1.0 / self.q;
        for (y, m) in self.y.iter_mut().zip(mu_prev) {
            *y += alpha * (m - *y);
        }
        Ok(())
    }

    pub fn value(&self) -> &[f64] {
        &self.y
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// `ln w_t` of the most recent weight.
    pub fn log_weight(&self) -> f64 {
        self.log_w
    }

    /// `S_t / w_t`.
    pub fn sum_over_weight(&self) -> f64 {
        self.q
    }
}

/// Names of the aggregated numeric columns, in CSV order.
pub const AGGREGATE_FIELDS: [&str; 9] = [
    "parallel_time",
    "eta",
    "gamma",
    "mu_loss_gap",
    "grad_norm_sq_mu",
    "mean_val_loss",
    "mean_val_acc",
    "mt_g",
    "function_evals_total",
];

/// One aggregated row: `(mean, stderr)` per field of [`AGGREGATE_FIELDS`],
/// `None` where any seed lacks the value.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: u64,
    pub values: Vec<Option<(f64, f64)>>,
}

fn fields(r: &MetricsRecord) -> [Option<f64>; 9] {
    [
        Some(r.parallel_time),
        Some(r.eta),
        Some(r.gamma),
        r.mu_loss_gap,
        Some(r.grad_norm_sq_mu),
        r.mean_val_loss,
        r.mean_val_acc,
        r.mt_g,
        Some(r.function_evals_total as f64),
    ]
}

/// Sorted-order mean and `sample std / √k`, so the result does not depend
/// on the order of the inputs. The mean is accumulated as an offset from
/// the smallest value, which makes it exact when all inputs agree.
fn order_free_mean_stderr(xs: &mut [f64]) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let k = xs.len() as f64;
    let base = xs[0];
    let mean = base + xs.iter().map(|x| x - base).sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Pointwise mean and standard error across seeds.
pub fn aggregate_seeds(series: &[Vec<MetricsRecord>]) -> Result<Vec<AggregateRow>> {
    let first = series.first().ok_or_else(|| HdoError::invalid("no series to aggregate"))?;
    for (s, other) in series.iter().enumerate() {
        let aligned = other.len() == first.len() && other.iter().zip(first).all(|(a, b)| a.step == b.step);
        if !aligned {
            return Err(HdoError::invalid(format!("series {s} is not aligned with series 0 on steps")));
        }
    }
    let rows = (0..first.len())
        .map(|r| {
            let per_seed: Vec<[Option<f64>; 9]> = series.iter().map(|s| fields(&s[r])).collect();
            let values = (0..AGGREGATE_FIELDS.len())
                .map(|f| {
                    let mut xs = per_seed.iter().map(|row| row[f]).collect::<Option<Vec<f64>>>()?;
                    Some(order_free_mean_stderr(&mut xs))
                })
                .collect();
            AggregateRow {
                step: first[r].step,
                values,
            }
        })
        .collect();
    Ok(rows)
}
