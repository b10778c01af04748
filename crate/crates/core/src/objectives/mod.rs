//! Finite-sum objectives with hand-derived stochastic gradients.
//!
//! Three instances are provided: a strongly convex quadratic with a known
//! optimum, L2-regularized logistic regression, and a smooth non-convex
//! sigmoid-squared classification loss. All of them implement
//! [`StochasticObjective`], which is also the extension point for custom
//! objectives in tests and experiments.

mod classification;
mod dataset;
mod partition;
mod quadratic;

pub use dataset::{load_csv_dataset, parse_csv_dataset, synthetic_classification, write_csv_dataset, CsvFormat, Dataset};
pub use partition::{partition_data, partition_indices, DataPartition, ShardMode};
pub use quadratic::QuadraticBuilder;

use classification::{Labeled, Loss, SIGMOID_SQ_CURVATURE};
use quadratic::Quadratic;

use crate::error::{check_dim, HdoError, Result};
use crate::vector::{axpy, dot, norm_sq};

/// A finite-sum objective `f(x) = mean_k F(x, k)` over indexed samples.
///
/// The `batch_*` methods assume a non-empty batch of valid indices and
/// vectors of length [`dim`](Self::dim); the free functions
/// [`stochastic_loss`], [`stochastic_gradient`] and
/// [`directional_derivative`] check those preconditions.
pub trait StochasticObjective: Send + Sync {
    fn dim(&self) -> usize;

    fn num_samples(&self) -> usize;

    /// Lipschitz constant `L` of every per-sample gradient.
    fn smoothness(&self) -> f64;

    /// Strong-convexity constant `ℓ`; zero when none is known.
    fn strong_convexity(&self) -> f64 {
        0.0
    }

    fn optimum(&self) -> Option<&[f64]> {
        None
    }

    fn optimal_value(&self) -> Option<f64> {
        None
    }

    fn batch_loss(&self, x: &[f64], batch: &[usize]) -> f64;

    /// Writes the mean per-sample gradient over `batch` into `out`.
    fn batch_gradient_into(&self, x: &[f64], batch: &[usize], out: &mut [f64]);

    /// `uᵀ ∇F(x, batch)`.
    fn batch_directional(&self, x: &[f64], batch: &[usize], u: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim()];
        self.batch_gradient_into(x, batch, &mut g);
        dot(&g, u)
    }

    fn loss(&self, x: &[f64]) -> f64 {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.batch_loss(x, &all)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        let mut g = vec![0.0; self.dim()];
        self.batch_gradient_into(x, &all, &mut g);
        g
    }

    /// Classification accuracy of `x` on the objective's own samples, or
    /// `None` for regression-type objectives.
    fn accuracy(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// `f_ν(x) − f(x)` when it is known in closed form and independent of `x`.
    fn exact_smoothing_gap(&self, _nu: f64) -> Option<f64> {
        None
    }

    /// `‖∇f_ν(x) − ∇f(x)‖` when it is known in closed form and independent of `x`.
    fn exact_smoothing_bias(&self, _nu: f64) -> Option<f64> {
        None
    }
}

fn check_batch<O: StochasticObjective + ?Sized>(obj: &O, x: &[f64], batch: &[usize]) -> Result<()> {
    check_dim(obj.dim(), x.len())?;
    if batch.is_empty() {
        return Err(HdoError::invalid("batch must be non-empty"));
    }
    let m = obj.num_samples();
    if let Some(&bad) = batch.iter().find(|&&k| k >= m) {
        return Err(HdoError::invalid(format!("sample index {bad} out of range (0..{m})")));
    }
    Ok(())
}

/// Mean per-sample loss over `batch`.
pub fn stochastic_loss<O: StochasticObjective + ?Sized>(obj: &O, x: &[f64], batch: &[usize]) -> Result<f64> {
    check_batch(obj, x, batch)?;
    Ok(obj.batch_loss(x, batch))
}

/// Mean per-sample gradient over `batch`.
pub fn stochastic_gradient<O: StochasticObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    batch: &[usize],
) -> Result<Vec<f64>> {
    check_batch(obj, x, batch)?;
    let mut g = vec![0.0; obj.dim()];
    obj.batch_gradient_into(x, batch, &mut g);
    Ok(g)
}

/// `uᵀ ∇F(x, batch)` without materializing the gradient where the objective
/// allows it.
pub fn directional_derivative<O: StochasticObjective + ?Sized>(
    obj: &O,
    x: &[f64],
    batch: &[usize],
    u: &[f64],
) -> Result<f64> {
    check_batch(obj, x, batch)?;
    check_dim(obj.dim(), u.len())?;
    Ok(obj.batch_directional(x, batch, u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    LogisticL2,
    SigmoidSqNonconvex,
}

#[derive(Debug, Clone)]
pub(crate) enum Body {
    Quadratic(Quadratic),
    Logistic { data: Labeled, lambda: f64 },
    SigmoidSquared(Labeled),
}

/// A concrete objective together with its published constants.
#[derive(Debug, Clone)]
pub struct ObjectiveSpec {
    kind: ObjectiveKind,
    dim: usize,
    smoothness: f64,
    strong_convexity: f64,
    x_star: Option<Vec<f64>>,
    f_star: Option<f64>,
    all: Vec<usize>,
    body: Body,
}

impl ObjectiveSpec {
    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn x_star(&self) -> Option<&[f64]> {
        self.x_star.as_deref()
    }

    pub fn f_star(&self) -> Option<f64> {
        self.f_star
    }

    /// Row-major Hessian of the quadratic instance.
    pub fn hessian(&self) -> Option<&[f64]> {
        match &self.body {
            Body::Quadratic(q) => Some(&q.hessian),
            _ => None,
        }
    }

    /// Build the same kind of objective over another dataset (for example a
    /// validation split). Quadratic objectives have no dataset and are
    /// returned unchanged.
    pub fn with_dataset(&self, dataset: &Dataset) -> Result<ObjectiveSpec> {
        match &self.body {
            Body::Quadratic(_) => Ok(self.clone()),
            Body::Logistic { lambda, .. } => make_logistic(dataset, *lambda),
            Body::SigmoidSquared(_) => make_nonconvex(dataset),
        }
    }
}

/// Strongly convex quadratic in `d` dimensions with Hessian eigenvalues
/// evenly spaced over `[1, cond]`, unit-scale sample noise and 256 samples.
/// See [`QuadraticBuilder`] for the other knobs.
pub fn make_quadratic(d: usize, cond: f64, seed: u64) -> Result<ObjectiveSpec> {
    QuadraticBuilder::new(d, cond, seed).build()
}

fn binary_labels(dataset: &Dataset) -> Result<Dataset> {
    let labels = dataset.labels();
    if labels.iter().all(|&y| y == 1.0 || y == -1.0) {
        return Ok(dataset.clone());
    }
    if labels.iter().all(|&y| y == 1.0 || y == 0.0) {
        return Ok(dataset.one_vs_rest(1.0));
    }
    Err(HdoError::invalid(
        "labels must be binary (±1 or 0/1); relabel multi-class data with Dataset::one_vs_rest",
    ))
}

/// `f(x) = mean log(1 + exp(−y aᵀx)) + (λ/2)‖x‖²` with `ℓ = λ` and the
/// conservative bound `L = λ + max‖a‖²/4`.
pub fn make_logistic(dataset: &Dataset, lambda: f64) -> Result<ObjectiveSpec> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(HdoError::invalid(format!("lambda must be positive, got {lambda}")));
    }
    let data = binary_labels(dataset)?;
    Ok(ObjectiveSpec {
        kind: ObjectiveKind::LogisticL2,
        dim: data.dim(),
        smoothness: lambda + 0.25 * data.max_row_norm_sq(),
        strong_convexity: lambda,
        x_star: None,
        f_star: None,
        all: (0..data.len()).collect(),
        body: Body::Logistic {
            data: Labeled { data },
            lambda,
        },
    })
}

/// `f(x) = mean (σ(y aᵀx) − 1)²`: smooth, bounded in `[0, 1]`, non-convex,
/// with `L = 0.1541 · max‖a‖²`.
pub fn make_nonconvex(dataset: &Dataset) -> Result<ObjectiveSpec> {
    let data = binary_labels(dataset)?;
    let smoothness = (SIGMOID_SQ_CURVATURE * data.max_row_norm_sq()).max(f64::MIN_POSITIVE);
    Ok(ObjectiveSpec {
        kind: ObjectiveKind::SigmoidSqNonconvex,
        dim: data.dim(),
        smoothness,
        strong_convexity: 0.0,
        x_star: None,
        f_star: None,
        all: (0..data.len()).collect(),
        body: Body::SigmoidSquared(Labeled { data }),
    })
}

impl StochasticObjective for ObjectiveSpec {
    fn dim(&self) -> usize {
        self.dim
    }

    fn num_samples(&self) -> usize {
        self.all.len()
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    fn optimum(&self) -> Option<&[f64]> {
        self.x_star.as_deref()
    }

    fn optimal_value(&self) -> Option<f64> {
        self.f_star
    }

    fn batch_loss(&self, x: &[f64], batch: &[usize]) -> f64 {
        match &self.body {
            Body::Quadratic(q) => q.loss(x, batch),
            Body::Logistic { data, lambda } => data.loss(Loss::Logistic, x, batch) + 0.5 * lambda * norm_sq(x),
            Body::SigmoidSquared(data) => data.loss(Loss::SigmoidSquared, x, batch),
        }
    }

    fn batch_gradient_into(&self, x: &[f64], batch: &[usize], out: &mut [f64]) {
        match &self.body {
            Body::Quadratic(q) => q.gradient_into(x, batch, out),
            Body::Logistic { data, lambda } => {
                data.gradient_into(Loss::Logistic, x, batch, out);
                axpy(*lambda, x, out);
            }
            Body::SigmoidSquared(data) => data.gradient_into(Loss::SigmoidSquared, x, batch, out),
        }
    }

    fn batch_directional(&self, x: &[f64], batch: &[usize], u: &[f64]) -> f64 {
        match &self.body {
            Body::Quadratic(q) => q.directional(x, batch, u),
            Body::Logistic { data, lambda } => data.directional(Loss::Logistic, x, batch, u) + lambda * dot(x, u),
            Body::SigmoidSquared(data) => data.directional(Loss::SigmoidSquared, x, batch, u),
        }
    }

    fn loss(&self, x: &[f64]) -> f64 {
        match &self.body {
            Body::Quadratic(q) => q.full_loss(x),
            _ => self.batch_loss(x, &self.all),
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.body {
            Body::Quadratic(q) => q.full_gradient(x),
            _ => {
                let mut g = vec![0.0; self.dim];
                self.batch_gradient_into(x, &self.all, &mut g);
                g
            }
        }
    }

    fn accuracy(&self, x: &[f64]) -> Option<f64> {
        match &self.body {
            Body::Quadratic(_) => None,
            Body::Logistic { data, .. } | Body::SigmoidSquared(data) => Some(data.accuracy(x)),
        }
    }

    fn exact_smoothing_gap(&self, nu: f64) -> Option<f64> {
        match &self.body {
            // E[½ ν² uᵀAu] = ν² tr(A) / 2; the linear shift terms vanish.
            Body::Quadratic(q) => Some(0.5 * nu * nu * q.hessian_trace()),
            _ => None,
        }
    }

    fn exact_smoothing_bias(&self, _nu: f64) -> Option<f64> {
        match &self.body {
            Body::Quadratic(_) => Some(0.0),
            _ => None,
        }
    }
}
