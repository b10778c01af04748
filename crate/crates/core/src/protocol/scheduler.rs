use rand::seq::SliceRandom;
use rand::Rng;

use super::{hdo_interact, LrSchedule, Population, StepParams};
use crate::error::Result;
use crate::objectives::StochasticObjective;

/// One executed pairwise interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEvent {
    pub first: usize,
    pub second: usize,
    pub eta: f64,
    pub nu: Option<f64>,
    pub function_evals: u64,
}

/// Disjoint pairs of one matching step plus the idle agent when `n` is odd.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub idle: Option<usize>,
}

/// Uniformly random unordered pair of distinct agents out of `n >= 2`.
pub fn uniform_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> (usize, usize) {
    assert!(n >= 2, "need at least two agents");
    let i = rng.random_range(0..n);
    let mut j = rng.random_range(0..n - 1);
    if j >= i {
        j += 1;
    }
    (i, j)
}

/// Uniformly random perfect matching of `0..n` (pairing consecutive entries
/// of a uniform permutation); for odd `n` the last entry idles.
pub fn random_matching<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Matching {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let idle = if n % 2 == 1 { perm.pop() } else { None };
    Matching {
        pairs: perm.chunks_exact(2).map(|c| (c[0], c[1])).collect(),
        idle,
    }
}

/// Run `hdo_interact` on each pair in order with shared `params`, calling
/// `before` with the population state preceding every interaction.
pub fn execute_pairs<O, F>(
    pop: &mut Population,
    obj: &O,
    pairs: &[(usize, usize)],
    params: &StepParams,
    mut before: F,
) -> Result<Vec<InteractionEvent>>
where
    O: StochasticObjective + ?Sized,
    F: FnMut(&Population),
{
    let mut events = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        before(pop);
        let (a, b) = pop.pair_mut(i, j);
        let update = hdo_interact(obj, a, b, params)?;
        pop.record_interaction(update.function_evals);
        events.push(InteractionEvent {
            first: i,
            second: j,
            eta: params.eta,
            nu: params.nu,
            function_evals: update.function_evals,
        });
    }
    Ok(events)
}

/// One population-protocol step: a single uniformly random pair interacts.
/// Fine-grained time advances by one, parallel time by `1/n`.
pub fn step_uniform_pair<O, R>(pop: &mut Population, obj: &O, schedule: &LrSchedule, rng: &mut R) -> Result<InteractionEvent>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    let params = pop.step_params(schedule.eta_at(pop.steps()))?;
    let pair = uniform_pair(pop.n(), rng);
    let mut events = execute_pairs(pop, obj, &[pair], &params, |_| {})?;
    pop.record_step();
    Ok(events.pop().expect("one pair executed"))
}

/// One matching step: every matched pair interacts with the same `η`;
/// counts as `⌊n/2⌋` interactions.
pub fn step_matching<O, R>(pop: &mut Population, obj: &O, schedule: &LrSchedule, rng: &mut R) -> Result<Vec<InteractionEvent>>
where
    O: StochasticObjective + ?Sized,
    R: Rng + ?Sized,
{
    let params = pop.step_params(schedule.eta_at(pop.steps()))?;
    let matching = random_matching(pop.n(), rng);
    let events = execute_pairs(pop, obj, &matching.pairs, &params, |_| {})?;
    pop.record_step();
    Ok(events)
}
