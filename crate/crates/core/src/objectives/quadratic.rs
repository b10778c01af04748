use rand::Rng;
use rand_distr::StandardNormal;

use super::{Body, ObjectiveKind, ObjectiveSpec};
use crate::error::{HdoError, Result};
use crate::rng;
use crate::vector::{axpy, dot, matvec, sub};

/// `F_k(x) = ½ (x−x*)ᵀ A (x−x*) + z_kᵀ (x−x*)` with the shifts `z_k`
/// centered so that their mean is zero. Every sample shares the Hessian `A`,
/// so each `∇F_k` is exactly `λ_max(A)`-Lipschitz and the sample-mean
/// objective is `½ (x−x*)ᵀ A (x−x*)` with minimum value 0 at `x*`.
#[derive(Debug, Clone)]
pub(crate) struct Quadratic {
    pub hessian: Vec<f64>,
    pub center: Vec<f64>,
    /// `samples x d`, row-major.
    pub shifts: Vec<f64>,
    pub samples: usize,
}

/// Builder for the strongly convex quadratic instance.
#[derive(Debug, Clone)]
pub struct QuadraticBuilder {
    dim: usize,
    cond: f64,
    seed: u64,
    samples: usize,
    noise: f64,
}

impl QuadraticBuilder {
    pub fn new(dim: usize, cond: f64, seed: u64) -> Self {
        Self {
            dim,
            cond,
            seed,
            samples: 256,
            noise: 1.0,
        }
    }

    /// Number of per-sample components (default 256).
    pub fn samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    /// Root-mean-square norm of the per-sample gradient shifts (default 1).
    /// Zero gives a noiseless objective whose every sample equals `f`.
    pub fn noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    /// Reports `L = cond` and `ℓ = 1`; for `d ≥ 2` these are the exact
    /// extreme eigenvalues. A one-dimensional instance has Hessian 1 and
    /// keeps `cond` as its (loose) smoothness bound.
    pub fn build(&self) -> Result<ObjectiveSpec> {
        let q = self.build_body()?;
        Ok(ObjectiveSpec {
            kind: ObjectiveKind::Quadratic,
            dim: self.dim,
            smoothness: self.cond,
            strong_convexity: 1.0,
            x_star: Some(q.center.clone()),
            f_star: Some(0.0),
            all: (0..q.samples).collect(),
            body: Body::Quadratic(q),
        })
    }

    fn build_body(&self) -> Result<Quadratic> {
        let d = self.dim;
        if d == 0 {
            return Err(HdoError::invalid("dimension must be at least 1"));
        }
        if !(self.cond >= 1.0) || !self.cond.is_finite() {
            return Err(HdoError::invalid(format!("condition number {} must be >= 1", self.cond)));
        }
        if self.samples == 0 {
            return Err(HdoError::invalid("quadratic needs at least one sample"));
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(HdoError::invalid("noise level must be finite and non-negative"));
        }
        let mut r = rng::stream(self.seed, &[rng::purpose::DATA]);
        let basis = random_orthonormal(d, &mut r);
        // A = I + Σ_j (λ_j − 1) q_j q_jᵀ, eigenvalues evenly spaced in [1, cond].
        let mut hessian = vec![0.0; d * d];
        for i in 0..d {
            hessian[i * d + i] = 1.0;
        }
        for (j, q) in basis.iter().enumerate() {
            let lambda = if d == 1 {
                1.0
            } else {
                1.0 + (self.cond - 1.0) * j as f64 / (d - 1) as f64
            };
            let w = lambda - 1.0;
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    hessian[a * d + b] += w * q[a] * q[b];
                }
            }
        }
        let center: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let m = self.samples;
        let mut shifts = vec![0.0; m * d];
        if self.noise > 0.0 && m > 1 {
            let per_component = self.noise / (d as f64).sqrt();
            for v in shifts.iter_mut() {
                *v = per_component * r.sample::<f64, _>(StandardNormal);
            }
            let mut mean = vec![0.0; d];
            for row in shifts.chunks_exact(d) {
                axpy(1.0 / m as f64, row, &mut mean);
            }
            for row in shifts.chunks_exact_mut(d) {
                axpy(-1.0, &mean, row);
            }
        }
        Ok(Quadratic {
            hessian,
            center,
            shifts,
            samples: m,
        })
    }
}

fn random_orthonormal<R: Rng>(d: usize, r: &mut R) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

impl Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn mean_shift(&self, batch: &[usize]) -> Vec<f64> {
        let d = self.dim();
        let mut z = vec![0.0; d];
        let w = 1.0 / batch.len() as f64;
        for &k in batch {
            axpy(w, &self.shifts[k * d..(k + 1) * d], &mut z);
        }
        z
    }

    pub fn loss(&self, x: &[f64], batch: &[usize]) -> f64 {
        let e = sub(x, &self.center);
        let ae = matvec(&self.hessian, &e);
        0.5 * dot(&e, &ae) + dot(&self.mean_shift(batch), &e)
    }

    pub fn gradient_into(&self, x: &[f64], batch: &[usize], out: &mut [f64]) {
        let e = sub(x, &self.center);
        let ae = matvec(&self.hessian, &e);
        let z = self.mean_shift(batch);
        for ((o, a), s) in out.iter_mut().zip(ae).zip(z) {
            *o = a + s;
        }
    }

    pub fn directional(&self, x: &[f64], batch: &[usize], u: &[f64]) -> f64 {
        // uᵀ(A e + z̄) = (A u)ᵀ e + z̄ᵀ u, A symmetric.
        let e = sub(x, &self.center);
        let au = matvec(&self.hessian, u);
        dot(&au, &e) + dot(&self.mean_shift(batch), u)
    }

    pub fn full_loss(&self, x: &[f64]) -> f64 {
        let e = sub(x, &self.center);
        0.5 * dot(&e, &matvec(&self.hessian, &e))
    }

    pub fn full_gradient(&self, x: &[f64]) -> Vec<f64> {
        matvec(&self.hessian, &sub(x, &self.center))
    }

    pub fn hessian_trace(&self) -> f64 {
        let d = self.dim();
        (0..d).map(|i| self.hessian[i * d + i]).sum()
    }
}
