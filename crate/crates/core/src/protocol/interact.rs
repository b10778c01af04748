use super::Agent;
use crate::error::{check_dim, Result};
use crate::estimators::{estimate, EstimatorConfig};
use crate::objectives::StochasticObjective;
use crate::vector::axpy;

/// Per-interaction parameters shared by both agents of a pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub eta: f64,
    /// Overrides the agents' configured smoothing radius when set.
    pub nu: Option<f64>,
    /// Momentum `m` in `g ← m g + (1−m) G`.
    pub momentum: f64,
}

/// What one pairwise interaction applied.
#[derive(Debug, Clone, PartialEq)]
pub struct PairUpdate {
    /// Momentum-filtered directions `Ĝ` used in the local steps (zero when
    /// `η = 0`).
    pub direction_a: Vec<f64>,
    pub direction_b: Vec<f64>,
    pub function_evals: u64,
}

/// The agent's estimator with the coupled smoothing radius applied.
pub(crate) fn effective_config(est: &EstimatorConfig, params: &StepParams) -> EstimatorConfig {
    match params.nu {
        Some(nu) if est.kind.is_biased() => est.with_nu(nu),
        _ => *est,
    }
}

/// Draw a fresh estimate at the agent's current model, fold it into the
/// momentum buffer and take the step `X ← X − η ĝ`. With `η = 0` the
/// estimator is not called and the agent is left untouched. Returns the
/// direction used and the oracle cost.
pub fn local_step<O: StochasticObjective + ?Sized>(obj: &O, agent: &mut Agent, params: &StepParams) -> Result<(Vec<f64>, u64)> {
    let d = agent.model.len();
    if params.eta == 0.0 {
        return Ok((vec![0.0; d], 0));
    }
    let cfg = effective_config(&agent.estimator, params);
    let est = estimate(obj, &agent.shard, &agent.model, &cfg, &mut agent.rng)?;
    let m = params.momentum;
    if m == 0.0 {
        agent.momentum.copy_from_slice(&est.vector);
    } else {
        for (g, e) in agent.momentum.iter_mut().zip(&est.vector) {
            *g = m * *g + (1.0 - m) * e;
        }
    }
    axpy(-params.eta, &agent.momentum, &mut agent.model);
    Ok((agent.momentum.clone(), est.function_evals))
}

/// Both agents adopt `(X^a + X^b) / 2`.
pub fn average_pair(a: &mut Agent, b: &mut Agent) {
    for (xa, xb) in a.model.iter_mut().zip(b.model.iter_mut()) {
        let avg = 0.5 * (*xa + *xb);
        *xa = avg;
        *xb = avg;
    }
}

/// One HDO interaction: each agent takes a local step from its own
/// pre-interaction model, then the pair averages. Momentum buffers stay
/// private to each agent.
pub fn hdo_interact<O: StochasticObjective + ?Sized>(
    obj: &O,
    a: &mut Agent,
    b: &mut Agent,
    params: &StepParams,
) -> Result<PairUpdate> {
    check_dim(a.model.len(), b.model.len())?;
    let (direction_a, evals_a) = local_step(obj, a, params)?;
    let (direction_b, evals_b) = local_step(obj, b, params)?;
    average_pair(a, b);
    a.interactions += 1;
    b.interactions += 1;
    Ok(PairUpdate {
        direction_a,
        direction_b,
        function_evals: evals_a + evals_b,
    })
}
