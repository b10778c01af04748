//! Monte-Carlo verification of the analytic bounds behind HDO: Gaussian
//! smoothing error, zeroth-order estimator moments, aggregate estimator
//! bias and the one-step contraction of the variance potential `Γ`.
//!
//! Every check yields a [`BoundCheckReport`] that passes when
//! `measured ≤ bound + 3·stderr`. Closed-form cases report a zero standard
//! error, so they pass or fail with no tolerance.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, HdoError, Result};
use crate::estimators::{couple_nu, estimate};
use crate::metrics::{compute_gamma, compute_mtg};
use crate::objectives::{stochastic_gradient, StochasticObjective};
use crate::protocol::{average_pair, effective_config, hdo_interact, uniform_pair, Agent, Population, StepParams};
use crate::rng::{self, SimRng};
use crate::stats::{monte_carlo, Moments, VectorMoments};
use crate::vector::{dist_sq, norm_sq};

/// Standard errors of slack granted to Monte-Carlo measurements.
pub const MARGIN_STDERRS: f64 = 3.0;
/// Finite-difference step of the gradient check.
pub const GRADCHECK_STEP: f64 = 1e-6;
/// Relative error tolerated by the gradient check.
pub const GRADCHECK_TOL: f64 = 1e-4;
/// Relative tolerance of the exact pure-averaging identity.
pub const ENUMERATION_TOL: f64 = 1e-12;
/// Fewest replicas accepted by [`check_gamma_recursion`].
pub const MIN_GAMMA_REPLICAS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckReport {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub stderr: f64,
    pub samples: u64,
    pub seed: u64,
    pub pass: bool,
}

impl BoundCheckReport {
    pub fn new(name: impl Into<String>, measured: f64, bound: f64, stderr: f64, samples: u64, seed: u64) -> Self {
        let pass = measured <= bound + MARGIN_STDERRS * stderr;
        Self {
            name: name.into(),
            measured,
            bound,
            stderr,
            samples,
            seed,
            pass,
        }
    }

    /// `bound + 3·stderr − measured`.
    pub fn slack(&self) -> f64 {
        self.bound + MARGIN_STDERRS * self.stderr - self.measured
    }

    /// Collapse per-probe reports into the one with the least slack,
    /// renamed to `name`, with samples summed. Fails if any input fails.
    pub fn worst(name: impl Into<String>, reports: Vec<BoundCheckReport>) -> Option<BoundCheckReport> {
        let samples = reports.iter().map(|r| r.samples).sum();
        let all_pass = reports.iter().all(|r| r.pass);
        let mut w = reports.into_iter().min_by(|a, b| a.slack().total_cmp(&b.slack()))?;
        w.name = name.into();
        w.samples = samples;
        w.pass = all_pass;
        Some(w)
    }
}

/// Probe points: standard Gaussian around the known optimum, otherwise
/// around the origin. Drawn from the stream `(seed, PROBES)`.
pub fn probe_points<O: StochasticObjective + ?Sized>(obj: &O, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, &[rng::purpose::PROBES]);
    let d = obj.dim();
    let center = obj.optimum().map_or_else(|| vec![0.0; d], <[f64]>::to_vec);
    (0..count)
        .map(|_| center.iter().map(|c| c + r.sample::<f64, _>(StandardNormal)).collect())
        .collect()
}

fn gaussian(u: &mut [f64], r: &mut SimRng) {
    u.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
}

fn shifted(x: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(x).zip(u) {
        *o = a + t * b;
    }
}

fn mc_vector<F>(total: u64, seed: u64, dim: usize, draw: F) -> Result<VectorMoments>
where
    F: Fn(&mut SimRng, &mut [f64]) -> Result<()> + Sync,
{
    let chunks = monte_carlo(total, seed, |count, r| {
        let mut acc = VectorMoments::new(dim);
        let mut out = vec![0.0; dim];
        for _ in 0..count {
            draw(r, &mut out)?;
            acc.push(&out);
        }
        Ok(acc)
    });
    let mut acc = VectorMoments::new(dim);
    for c in chunks {
        acc.merge(&c?);
    }
    Ok(acc)
}

fn probe_seed(seed: u64, k: usize) -> u64 {
    rng::derive_seed(seed, &[rng::purpose::PROBES, k as u64])
}

fn check_inputs<O: StochasticObjective + ?Sized>(obj: &O, nu: f64, probes: &[Vec<f64>], samples: u64) -> Result<()> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(HdoError::invalid(format!("smoothing radius must be positive, got {nu}")));
    }
    if probes.is_empty() {
        return Err(HdoError::invalid("at least one probe point is required"));
    }
    if samples < 2 {
        return Err(HdoError::invalid("Monte-Carlo checks need at least two samples"));
    }
    probes.iter().try_for_each(|p| check_dim(obj.dim(), p.len()))
}

/// `|f_ν(x) − f(x)| ≤ ν² L d / 2`, with `f_ν(x) = E f(x + νu)` estimated
/// from `samples` antithetic pairs per probe.
pub fn check_smoothing_value_gap<O: StochasticObjective + ?Sized>(
    obj: &O,
    nu: f64,
    probes: &[Vec<f64>],
    samples: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    Ok(check_smoothing(obj, nu, probes, samples, seed)?.0)
}

/// `‖∇f_ν(x) − ∇f(x)‖ ≤ (ν/2) L (d+3)^{3/2}`, with `∇f_ν(x)` estimated as
/// the mean of `((f(x+νu) − f(x−νu)) / 2ν) u`.
pub fn check_smoothing_grad_bias<O: StochasticObjective + ?Sized>(
    obj: &O,
    nu: f64,
    probes: &[Vec<f64>],
    samples: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    Ok(check_smoothing(obj, nu, probes, samples, seed)?.1)
}

/// Both smoothing checks from one set of draws: each `u` feeds the value gap
/// and the gradient bias through the same pair `f(x ± νu)`. Returns
/// `(value_gap, grad_bias)`.
pub fn check_smoothing<O: StochasticObjective + ?Sized>(
    obj: &O,
    nu: f64,
    probes: &[Vec<f64>],
    samples: u64,
    seed: u64,
) -> Result<(BoundCheckReport, BoundCheckReport)> {
    check_inputs(obj, nu, probes, samples)?;
    let d = obj.dim();
    let gap_bound = 0.5 * nu * nu * obj.smoothness() * d as f64;
    let bias_bound = smoothing_bias_bound(nu, obj.smoothness(), d);
    let (gap_name, bias_name) = ("smoothing_value_gap", "smoothing_grad_bias");
    let exact_gap = obj.exact_smoothing_gap(nu);
    let exact_bias = obj.exact_smoothing_bias(nu);
    if let (Some(gap), Some(bias)) = (exact_gap, exact_bias) {
        return Ok((
            BoundCheckReport::new(gap_name, gap.abs(), gap_bound, 0.0, 0, seed),
            BoundCheckReport::new(bias_name, bias, bias_bound, 0.0, 0, seed),
        ));
    }
    let mut gaps = Vec::with_capacity(probes.len());
    let mut biases = Vec::with_capacity(probes.len());
    for (k, x) in probes.iter().enumerate() {
        let fx = obj.loss(x);
        let chunks = monte_carlo(samples, probe_seed(seed, k), |count, r| {
            let (mut u, mut p) = (vec![0.0; d], vec![0.0; d]);
            let mut value = Moments::new();
            let mut grad = VectorMoments::new(d);
            for _ in 0..count {
                gaussian(&mut u, r);
                shifted(x, &u, nu, &mut p);
                let up = obj.loss(&p);
                shifted(x, &u, -nu, &mut p);
                let down = obj.loss(&p);
                value.push(0.5 * (up + down) - fx);
                let coef = (up - down) / (2.0 * nu);
                u.iter_mut().for_each(|v| *v *= coef);
                grad.push(&u);
            }
            (value, grad)
        });
        let mut value = Moments::new();
        let mut grad = VectorMoments::new(d);
        for (v, g) in &chunks {
            value.merge(v);
            grad.merge(g);
        }
        gaps.push(BoundCheckReport::new(gap_name, value.mean().abs(), gap_bound, value.stderr(), samples, seed));
        let measured = dist_sq(&grad.mean(), &obj.gradient(x)).sqrt();
        biases.push(BoundCheckReport::new(bias_name, measured, bias_bound, grad.stderr_norm(), samples, seed));
    }
    let gap = match exact_gap {
        Some(g) => BoundCheckReport::new(gap_name, g.abs(), gap_bound, 0.0, 0, seed),
        None => BoundCheckReport::worst(gap_name, gaps).expect("probes are non-empty"),
    };
    let bias = match exact_bias {
        Some(b) => BoundCheckReport::new(bias_name, b, bias_bound, 0.0, 0, seed),
        None => BoundCheckReport::worst(bias_name, biases).expect("probes are non-empty"),
    };
    Ok((gap, bias))
}

/// `(ν/2) L (d+3)^{3/2}`.
pub fn smoothing_bias_bound(nu: f64, smoothness: f64, d: usize) -> f64 {
    0.5 * nu * smoothness * (d as f64 + 3.0).powf(1.5)
}

/// Exact variance `s²` of the minibatch gradient at `x` when `batch_size`
/// samples are drawn without replacement from `shard`:
/// `(N−b)/(b(N−1)) · (1/N) Σ_k ‖∇F_k(x) − ∇f^i(x)‖²`.
pub fn batch_gradient_variance<O: StochasticObjective + ?Sized>(
    obj: &O,
    shard: &[usize],
    x: &[f64],
    batch_size: usize,
) -> Result<f64> {
    let local = stochastic_gradient(obj, x, shard)?;
    let n = shard.len();
    if batch_size >= n {
        return Ok(0.0);
    }
    let mut g = vec![0.0; x.len()];
    let spread = shard
        .iter()
        .map(|&k| {
            obj.batch_gradient_into(x, &[k], &mut g);
            dist_sq(&g, &local)
        })
        .sum::<f64>()
        / n as f64;
    let (n, b) = (n as f64, batch_size as f64);
    Ok((n - b) / (b * (n - 1.0)) * spread)
}

struct ZoMoments {
    second: Moments,
    deviation: Moments,
    local_grad_sq: f64,
    s_sq: f64,
}

fn zo_moments<O: StochasticObjective + ?Sized>(obj: &O, agent: &Agent, nu: f64, x: &[f64], samples: u64, seed: u64) -> Result<ZoMoments> {
    if !agent.is_zeroth_order() {
        return Err(HdoError::invalid("zeroth-order moment checks need a zeroth-order agent"));
    }
    if !(nu > 0.0) {
        return Err(HdoError::invalid(format!("smoothing radius must be positive, got {nu}")));
    }
    check_dim(obj.dim(), x.len())?;
    let cfg = agent.estimator.with_nu(nu);
    let local = stochastic_gradient(obj, x, agent.shard())?;
    let chunks = monte_carlo(samples, seed, |count, r| {
        let mut second = Moments::new();
        let mut deviation = Moments::new();
        for _ in 0..count {
            let g = estimate(obj, agent.shard(), x, &cfg, r)?.vector;
            second.push(norm_sq(&g));
            deviation.push(dist_sq(&g, &local));
        }
        Ok::<_, HdoError>((second, deviation))
    });
    let mut second = Moments::new();
    let mut deviation = Moments::new();
    for c in chunks {
        let (s, v) = c?;
        second.merge(&s);
        deviation.merge(&v);
    }
    Ok(ZoMoments {
        second,
        deviation,
        local_grad_sq: norm_sq(&local),
        s_sq: batch_gradient_variance(obj, agent.shard(), x, cfg.batch_size)?,
    })
}

fn nu_term<O: StochasticObjective + ?Sized>(obj: &O, nu: f64) -> f64 {
    let l = obj.smoothness();
    nu * nu * l * l * (obj.dim() as f64 + 6.0).powi(3)
}

/// `E‖G_ν(x)‖² ≤ ½ν²L²(d+6)³ + 2(d+4)(‖∇f^i(x)‖² + s_i²)` for the agent's
/// estimator at radius `nu`, where `f^i` is the agent's shard objective and
/// `s_i²` the exact minibatch-gradient variance at `x`.
pub fn check_zo_second_moment<O: StochasticObjective + ?Sized>(
    obj: &O,
    agent: &Agent,
    nu: f64,
    x: &[f64],
    samples: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    let m = zo_moments(obj, agent, nu, x, samples, seed)?;
    let d4 = obj.dim() as f64 + 4.0;
    let bound = 0.5 * nu_term(obj, nu) + 2.0 * d4 * (m.local_grad_sq + m.s_sq);
    Ok(BoundCheckReport::new("zo_second_moment", m.second.mean(), bound, m.second.stderr(), samples, seed))
}

/// `E‖G_ν(x) − ∇f^i(x)‖² ≤ (3/2)ν²L²(d+6)³ + 4(d+4)(‖∇f^i(x)‖² + s_i²)`.
pub fn check_zo_variance_bound<O: StochasticObjective + ?Sized>(
    obj: &O,
    agent: &Agent,
    nu: f64,
    x: &[f64],
    samples: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    let m = zo_moments(obj, agent, nu, x, samples, seed)?;
    let d4 = obj.dim() as f64 + 4.0;
    let bound = 1.5 * nu_term(obj, nu) + 4.0 * d4 * (m.local_grad_sq + m.s_sq);
    Ok(BoundCheckReport::new("zo_variance", m.deviation.mean(), bound, m.deviation.stderr(), samples, seed))
}

/// Aggregate bias `B = (1/n) Σ_i b_i ≤ η n0 L (d+3)^{3/2} / (2cn)` with
/// `ν = η/c`. Each `b_i = ‖E G^i(X^i) − ∇f^i(X^i)‖` is measured by
/// Monte-Carlo for the zeroth-order agents; first-order agents contribute 0.
pub fn check_bias_aggregate<O: StochasticObjective + ?Sized>(
    pop: &Population,
    obj: &O,
    eta: f64,
    c: f64,
    samples: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    let nu = couple_nu(eta, c)?;
    let n = pop.n() as f64;
    let d = pop.dim();
    let bound = eta * pop.n0() as f64 / (2.0 * c * n) * obj.smoothness() * (d as f64 + 3.0).powf(1.5);
    let name = "bias_aggregate";
    if pop.n0() == 0 {
        return Ok(BoundCheckReport::new(name, 0.0, bound, 0.0, 0, seed));
    }
    let params = StepParams {
        eta,
        nu: Some(nu),
        momentum: 0.0,
    };
    let mut total = 0.0;
    let mut var = 0.0;
    for (i, a) in pop.agents().iter().enumerate().filter(|(_, a)| a.is_zeroth_order()) {
        let cfg = effective_config(&a.estimator, &params);
        let acc = mc_vector(samples, rng::derive_seed(seed, &[rng::purpose::AGENT, i as u64]), d, |r, out| {
            out.copy_from_slice(&estimate(obj, a.shard(), &a.model, &cfg, r)?.vector);
            Ok(())
        })?;
        let local = stochastic_gradient(obj, &a.model, a.shard())?;
        total += dist_sq(&acc.mean(), &local).sqrt();
        var += acc.stderr_norm().powi(2);
    }
    Ok(BoundCheckReport::new(name, total / n, bound, var.sqrt() / n, samples * pop.n0() as u64, seed))
}

/// One-step recursion `E[Γ_{t+1}] ≤ (1 − 1/2n) Γ_t + (4/n) η² E[M_t^G]`
/// from a frozen population. Each replica forks the population with fresh
/// agent streams and performs one uniform-pair interaction; `E[M_t^G]` is
/// estimated from one independent [`compute_mtg`] draw per replica.
pub fn check_gamma_recursion<O: StochasticObjective + ?Sized>(
    pop: &Population,
    obj: &O,
    eta: f64,
    replicas: u64,
    seed: u64,
) -> Result<BoundCheckReport> {
    if replicas < MIN_GAMMA_REPLICAS {
        return Err(HdoError::invalid(format!(
            "gamma recursion needs at least {MIN_GAMMA_REPLICAS} replicas, got {replicas}"
        )));
    }
    if pop.momentum() != 0.0 {
        return Err(HdoError::invalid("gamma recursion is stated for momentum-free estimates"));
    }
    let params = pop.step_params(eta)?;
    let n = pop.n();
    let chunks = monte_carlo(replicas, rng::derive_seed(seed, &[rng::purpose::REPLICA]), |count, r| {
        let mut next = Moments::new();
        let mut mtg = Moments::new();
        for _ in 0..count {
            let mut p = pop.fork(r.random());
            let (i, j) = uniform_pair(n, r);
            let (a, b) = p.pair_mut(i, j);
            hdo_interact(obj, a, b, &params)?;
            next.push(compute_gamma(&p));
            mtg.push(compute_mtg(pop, obj, &params, r)?);
        }
        Ok::<_, HdoError>((next, mtg))
    });
    let mut next = Moments::new();
    let mut mtg = Moments::new();
    for c in chunks {
        let (g, m) = c?;
        next.merge(&g);
        mtg.merge(&m);
    }
    let nf = n as f64;
    let coef = 4.0 / nf * eta * eta;
    let bound = (1.0 - 0.5 / nf) * compute_gamma(pop) + coef * mtg.mean();
    let stderr = next.stderr().hypot(coef * mtg.stderr());
    Ok(BoundCheckReport::new("gamma_recursion", next.mean(), bound, stderr, replicas, seed))
}

/// Mean of `Γ` after pure averaging of each of the `n(n−1)/2` pairs,
/// computed by enumeration.
pub fn enumerate_pure_averaging(pop: &Population) -> f64 {
    let n = pop.n();
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let mut p = pop.clone();
            let (a, b) = p.pair_mut(i, j);
            average_pair(a, b);
            total += compute_gamma(&p);
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Exact identity `E[Γ_{t+1}] = Γ_t (n−2)/(n−1)` for `η = 0`: measured is
/// the absolute deviation of the enumerated mean from the formula.
pub fn pure_averaging_gamma_enumerated(pop: &Population) -> BoundCheckReport {
    let n = pop.n() as f64;
    let gamma = compute_gamma(pop);
    let deviation = (enumerate_pure_averaging(pop) - gamma * (n - 2.0) / (n - 1.0)).abs();
    let samples = (pop.n() * (pop.n() - 1) / 2) as u64;
    BoundCheckReport::new("pure_averaging_enumeration", deviation, ENUMERATION_TOL * gamma.max(1.0), 0.0, samples, 0)
}

/// Central finite differences (step [`GRADCHECK_STEP`]) against the
/// analytic full gradient at `points` probe points; measured is the worst
/// relative error `‖fd − ∇f‖ / max(‖∇f‖, 1e-8)`.
pub fn check_gradcheck_all<O: StochasticObjective + ?Sized>(obj: &O, points: usize, seed: u64) -> Result<BoundCheckReport> {
    if points == 0 {
        return Err(HdoError::invalid("gradient check needs at least one point"));
    }
    let h = GRADCHECK_STEP;
    let worst = probe_points(obj, points, seed)
        .iter()
        .map(|x| {
            let mut p = x.clone();
            let fd: Vec<f64> = (0..x.len())
                .map(|j| {
                    p[j] = x[j] + h;
                    let up = obj.loss(&p);
                    p[j] = x[j] - h;
                    let down = obj.loss(&p);
                    p[j] = x[j];
                    (up - down) / (2.0 * h)
                })
                .collect();
            let g = obj.gradient(x);
            dist_sq(&fd, &g).sqrt() / norm_sq(&g).sqrt().max(1e-8)
        })
        .fold(0.0, f64::max);
    Ok(BoundCheckReport::new("gradcheck", worst, GRADCHECK_TOL, 0.0, points as u64, seed))
}
