use super::{step_matching, step_uniform_pair, Population, PopulationConfig, SchedulerMode};
use crate::error::{HdoError, Result};
use crate::metrics::{compute_gamma, compute_mtg, compute_mu, evaluate_validation, MetricsRecord, WeightedAverageState};
use crate::objectives::StochasticObjective;
use crate::rng::{self, SimRng};
use crate::vector::norm_sq;

/// Receives metrics records as they are produced.
pub trait MetricsSink {
    fn record(&mut self, record: &MetricsRecord) -> Result<()>;
}

impl MetricsSink for Vec<MetricsRecord> {
    fn record(&mut self, record: &MetricsRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
impl MetricsSink for () {
    fn record(&mut self, _: &MetricsRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Copy)]
pub struct RunOptions<'a> {
    /// Record every this many scheduler steps (plus step 0 and the last step).
    pub metric_cadence: u64,
    /// Objective over held-out data for `mean_val_loss` / `mean_val_acc`.
    pub validation: Option<&'a dyn StochasticObjective>,
    /// Sample `M_t^G` at every record from the metrics rng stream.
    pub sample_mtg: bool,
    /// Maintain the weighted average `y_T` (needs `ℓ > 0`).
    pub track_weighted_average: bool,
    /// Watch for the first step with `f(μ) − f* < target_gap`.
    pub target_gap: Option<f64>,
    /// End the run as soon as the target gap is reached.
    pub stop_at_target: bool,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            metric_cadence: 10,
            validation: None,
            sample_mtg: false,
            track_weighted_average: false,
            target_gap: None,
            stop_at_target: false,
        }
    }
}

/// When the target gap was first observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetHit {
    pub step: u64,
    pub interactions: u64,
    pub parallel_time: f64,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<MetricsRecord>,
    pub final_mu: Vec<f64>,
    /// `y_T` when tracking was requested.
    pub weighted_average: Option<Vec<f64>>,
    pub target_hit: Option<TargetHit>,
    pub steps_run: u64,
}

struct Recorder<'a, 'o, O: ?Sized> {
    obj: &'o O,
    opts: &'a RunOptions<'a>,
    rng: SimRng,
}

impl<O: StochasticObjective + ?Sized> Recorder<'_, '_, O> {
    fn snapshot(&mut self, pop: &Population, eta: f64) -> Result<MetricsRecord> {
        let mu = compute_mu(pop);
        let (mean_val_loss, mean_val_acc) = match self.opts.validation {
            Some(v) => {
                let (l, a) = evaluate_validation(pop, v)?;
                (Some(l), a)
            }
            None => (None, None),
        };
        let mt_g = if self.opts.sample_mtg {
            Some(compute_mtg(pop, self.obj, &pop.step_params(eta)?, &mut self.rng)?)
        } else {
            None
        };
        Ok(MetricsRecord {
            step: pop.steps(),
            parallel_time: pop.parallel_time(),
            eta,
            gamma: compute_gamma(pop),
            mu_loss_gap: self.obj.optimal_value().map(|fs| self.obj.loss(&mu) - fs),
            grad_norm_sq_mu: norm_sq(&self.obj.gradient(&mu)),
            mean_val_loss,
            mean_val_acc,
            mt_g,
            function_evals_total: pop.function_evals(),
        })
    }
}

/// Execute `cfg.steps` scheduler steps on `pop`. The scheduler draws from
/// the stream `(cfg.seed, SCHEDULER)` and metric sampling from
/// `(cfg.seed, METRICS)`, so diagnostics never perturb the trajectory.
///
/// Records are taken at step 0, every `metric_cadence` steps and after the
/// last step; each carries the learning rate scheduled for the next step.
/// The weighted average is advanced once per scheduler step with the mean
/// model from before the step.
pub fn run<O, S>(pop: &mut Population, obj: &O, cfg: &PopulationConfig, opts: &RunOptions<'_>, sink: &mut S) -> Result<RunResult>
where
    O: StochasticObjective + ?Sized,
    S: MetricsSink + ?Sized,
{
    cfg.schedule.validate()?;
    if opts.metric_cadence == 0 {
        return Err(HdoError::invalid("metric_cadence must be at least 1"));
    }
    let ell = obj.strong_convexity();
    if opts.track_weighted_average && !(ell > 0.0) {
        return Err(HdoError::invalid("weighted average requested for an objective without strong convexity"));
    }
    let f_star = match opts.target_gap {
        Some(_) => Some(
            obj.optimal_value()
                .ok_or_else(|| HdoError::invalid("target gap requested but the optimal value is unknown"))?,
        ),
        None => None,
    };

    let mut sched_rng = rng::stream(cfg.seed, &[rng::purpose::SCHEDULER]);
    let mut recorder = Recorder {
        obj,
        opts,
        rng: rng::stream(cfg.seed, &[rng::purpose::METRICS]),
    };
    let mut records = Vec::new();
    let mut emit = |rec: MetricsRecord, records: &mut Vec<MetricsRecord>| -> Result<()> {
        sink.record(&rec)?;
        records.push(rec);
        Ok(())
    };

    let start = pop.steps();
    let mut wavg = opts.track_weighted_average.then(|| WeightedAverageState::new(pop.dim()));
    let hit_now = |pop: &Population, gap: f64, fs: f64| -> Option<TargetHit> {
        (obj.loss(&compute_mu(pop)) - fs < gap).then(|| TargetHit {
            step: pop.steps() - start,
            interactions: pop.interactions(),
            parallel_time: pop.parallel_time(),
        })
    };
    let mut target_hit = match (opts.target_gap, f_star) {
        (Some(g), Some(fs)) => hit_now(pop, g, fs),
        _ => None,
    };

    emit(recorder.snapshot(pop, cfg.schedule.eta_at(pop.steps()))?, &mut records)?;
    let mut done = 0u64;
    let stop_early = |hit: &Option<TargetHit>| opts.stop_at_target && hit.is_some();
    while done < cfg.steps && !stop_early(&target_hit) {
        let eta = cfg.schedule.eta_at(pop.steps());
        if let Some(w) = wavg.as_mut() {
            w.update(&compute_mu(pop), eta, ell, pop.n())?;
        }
        match cfg.scheduler {
            SchedulerMode::UniformPair => {
                step_uniform_pair(pop, obj, &cfg.schedule, &mut sched_rng)?;
            }
            SchedulerMode::RandomMatching => {
                step_matching(pop, obj, &cfg.schedule, &mut sched_rng)?;
            }
        }
        done += 1;
        if target_hit.is_none() {
            if let (Some(g), Some(fs)) = (opts.target_gap, f_star) {
                target_hit = hit_now(pop, g, fs);
            }
        }
        let last = done == cfg.steps || stop_early(&target_hit);
        if done.is_multiple_of(opts.metric_cadence) || last {
            emit(recorder.snapshot(pop, cfg.schedule.eta_at(pop.steps()))?, &mut records)?;
        }
    }

    Ok(RunResult {
        records,
        final_mu: compute_mu(pop),
        weighted_average: wavg.map(|w| w.value().to_vec()),
        target_hit,
        steps_run: done,
    })
}
