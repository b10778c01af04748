use super::Dataset;
use crate::vector::{axpy, dot};

/// Feature rows with ±1 labels.
#[derive(Debug, Clone)]
pub(crate) struct Labeled {
    pub data: Dataset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Loss {
    /// `log(1 + exp(−y aᵀx))`
    Logistic,
    /// `(σ(y aᵀx) − 1)²`
    SigmoidSquared,
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(−t))` without overflow.
fn softplus_neg(t: f64) -> f64 {
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

/// Supremum over `t` of `|d²/dt² (σ(t) − 1)²|`, rounded up. With `s = σ(t)`
/// the second derivative is `−2 s (1−s)² (1−3s)`, maximized in magnitude
/// near `s ≈ 0.614` where it is about 0.15406.
pub(crate) const SIGMOID_SQ_CURVATURE: f64 = 0.1541;

impl Loss {
    pub fn value(self, margin: f64) -> f64 {
        match self {
            Loss::Logistic => softplus_neg(margin),
            Loss::SigmoidSquared => {
                let s = sigmoid(margin);
                (s - 1.0) * (s - 1.0)
            }
        }
    }

    /// Derivative of the loss with respect to the margin `y aᵀx`.
    pub fn slope(self, margin: f64) -> f64 {
        match self {
            Loss::Logistic => -sigmoid(-margin),
            Loss::SigmoidSquared => {
                let s = sigmoid(margin);
                2.0 * (s - 1.0) * s * (1.0 - s)
            }
        }
    }
}

impl Labeled {
    fn margin(&self, x: &[f64], k: usize) -> f64 {
        self.data.label(k) * dot(self.data.features(k), x)
    }

    pub fn loss(&self, loss: Loss, x: &[f64], batch: &[usize]) -> f64 {
        let total: f64 = batch.iter().map(|&k| loss.value(self.margin(x, k))).sum();
        total / batch.len() as f64
    }

    pub fn gradient_into(&self, loss: Loss, x: &[f64], batch: &[usize], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let w = 1.0 / batch.len() as f64;
        for &k in batch {
            let coef = w * loss.slope(self.margin(x, k)) * self.data.label(k);
            axpy(coef, self.data.features(k), out);
        }
    }

    pub fn directional(&self, loss: Loss, x: &[f64], batch: &[usize], u: &[f64]) -> f64 {
        let total: f64 = batch
            .iter()
            .map(|&k| {
                let a = self.data.features(k);
                loss.slope(self.data.label(k) * dot(a, x)) * self.data.label(k) * dot(a, u)
            })
            .sum();
        total / batch.len() as f64
    }

    pub fn accuracy(&self, x: &[f64]) -> f64 {
        let correct = (0..self.data.len())
            .filter(|&k| self.margin(x, k) > 0.0)
            .count();
        correct as f64 / self.data.len() as f64
    }
}
