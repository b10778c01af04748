//! Acceptance criteria. Prints one PASS/FAIL line per criterion and a list
//! of failed criteria. A failure only makes the process exit non-zero when
//! `HDO_ACCEPTANCE_STRICT` is set, so the rest of the test run still
//! executes; the printed lines are the result.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hdo::estimators::{estimate, EstimatorConfig, EstimatorKind};
use hdo::metrics::{aggregate_seeds, compute_gamma, MetricsRecord};
use hdo::objectives::{
    make_logistic, partition_indices, synthetic_classification, ObjectiveSpec, QuadraticBuilder, ShardMode,
    StochasticObjective,
};
use hdo::protocol::{
    init_population, run, step_uniform_pair, Agent, LrSchedule, NuCoupling, Population, PopulationConfig,
    RunOptions, SchedulerMode,
};
use hdo::rng;
use hdo::runner::{self, PopulationSpec};
use hdo::stats::{median, monte_carlo, Moments, VectorMoments};
use hdo::theory_checks::{
    check_gamma_recursion, check_smoothing, check_zo_second_moment,
    check_zo_variance_bound, probe_points, pure_averaging_gamma_enumerated, BoundCheckReport, ENUMERATION_TOL,
    MARGIN_STDERRS,
};

const MASTER: u64 = 20_240_601;
const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn seed(path: &[u64]) -> u64 {
    rng::derive_seed(MASTER, path)
}

fn logistic(samples: usize, d: usize, s: u64) -> ObjectiveSpec {
    make_logistic(&synthetic_classification(samples, d, 0.1, s).unwrap(), 1e-3).unwrap()
}

fn quadratic(d: usize, noise: f64, s: u64) -> ObjectiveSpec {
    QuadraticBuilder::new(d, 10.0, s).noise(noise).build().unwrap()
}

fn worst_failure(reports: &[BoundCheckReport]) -> String {
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    let tightest = reports
        .iter()
        .max_by(|a, b| (a.measured / a.bound).total_cmp(&(b.measured / b.bound)))
        .unwrap();
    format!(
        "{} checks, {} failed {:?}; tightest measured/bound = {:.3e}",
        reports.len(),
        failed.len(),
        failed,
        tightest.measured / tightest.bound
    )
}

// 1. forward-mode estimator is unbiased
fn c1_forward_unbiased() -> Outcome {
    const DRAWS: u64 = 1_000_000;
    let obj = logistic(200, 20, seed(&[1]));
    let shard: Vec<usize> = (0..obj.num_samples()).collect();
    let cfg = EstimatorConfig::zeroth_order(EstimatorKind::ZoUnbiasedForward, 1, 1e-3, 2);
    let mut worst = 0.0f64;
    let mut pass = true;
    for (k, x) in probe_points(&obj, 5, seed(&[1, 1])).iter().enumerate() {
        let mut acc = VectorMoments::new(obj.dim());
        for chunk in monte_carlo(DRAWS, seed(&[1, 2, k as u64]), |count, r| {
            let mut m = VectorMoments::new(obj.dim());
            for _ in 0..count {
                m.push(&estimate(&obj, &shard, x, &cfg, r).unwrap().vector);
            }
            m
        }) {
            acc.merge(&chunk);
        }
        let err = hdo::vector::dist_sq(&acc.mean(), &obj.gradient(x)).sqrt();
        let ratio = err / acc.stderr_norm();
        worst = worst.max(ratio);
        pass &= ratio <= MARGIN_STDERRS;
    }
    outcome(pass, format!("5 probes x 1e6 draws, worst ||mean - grad|| / stderr = {worst:.3}"))
}

// 2. and 3. share the probe grid
struct Grid {
    d: usize,
    kind: &'static str,
    obj: ObjectiveSpec,
    probes: Vec<Vec<f64>>,
}

const GRID_DIMS: [usize; 2] = [5, 20];
const GRID_NUS: [f64; 2] = [0.01, 0.1];
const GRID_PROBES: usize = 10;

fn grid() -> Vec<Grid> {
    let mut out = Vec::new();
    for d in GRID_DIMS {
        let q = quadratic(d, 1.0, seed(&[2, d as u64]));
        let l = logistic(32, d, seed(&[2, d as u64, 1]));
        for (kind, obj) in [("quadratic", q), ("logistic", l)] {
            let probes = probe_points(&obj, GRID_PROBES, seed(&[2, d as u64, 2]));
            out.push(Grid { d, kind, obj, probes });
        }
    }
    out
}

fn c2_smoothing() -> Outcome {
    const DRAWS: u64 = 1_000_000;
    let mut reports = Vec::new();
    for g in grid() {
        for nu in GRID_NUS {
            let s = seed(&[2, g.d as u64, nu.to_bits()]);
            let tag = format!("[{},d={},nu={nu}]", g.kind, g.d);
            let (mut v, mut b) = check_smoothing(&g.obj, nu, &g.probes, DRAWS, s).unwrap();
            v.name += &tag;
            b.name += &tag;
            if g.kind == "quadratic" && (v.stderr != 0.0 || b.stderr != 0.0) {
                return outcome(false, format!("quadratic case {tag} was not exact"));
            }
            reports.extend([v, b]);
        }
    }
    outcome(reports.iter().all(|r| r.pass), worst_failure(&reports))
}

fn moment_agent(obj: &ObjectiveSpec, nu: f64, x: &[f64]) -> Agent {
    Agent::new(
        x.to_vec(),
        EstimatorConfig::zeroth_order(EstimatorKind::ZoBiasedOneSided, 1, nu, 2),
        (0..obj.num_samples()).collect(),
        rng::stream(0, &[]),
    )
}

fn c3_moments() -> Outcome {
    const DRAWS: u64 = 100_000;
    let mut reports = Vec::new();
    for g in grid() {
        for nu in GRID_NUS {
            for (k, x) in g.probes.iter().enumerate() {
                let s = seed(&[3, g.d as u64, nu.to_bits(), k as u64]);
                let agent = moment_agent(&g.obj, nu, x);
                let mut m = check_zo_second_moment(&g.obj, &agent, nu, x, DRAWS, s).unwrap();
                let mut v = check_zo_variance_bound(&g.obj, &agent, nu, x, DRAWS, s).unwrap();
                let tag = format!("[{},d={},nu={nu},probe={k}]", g.kind, g.d);
                m.name += &tag;
                v.name += &tag;
                reports.extend([m, v]);
            }
        }
    }
    outcome(reports.iter().all(|r| r.pass), worst_failure(&reports))
}

fn population(obj: &ObjectiveSpec, n0: usize, n1: usize, rv: usize, eta: f64, steps: u64, s: u64) -> (Population, PopulationConfig) {
    let cfg = PopulationConfig {
        n0,
        n1,
        zo_estimator: EstimatorConfig::zeroth_order(EstimatorKind::ZoUnbiasedForward, rv, 1e-3, 2),
        fo_estimator: EstimatorConfig::first_order(2),
        schedule: LrSchedule::constant(eta),
        momentum: 0.0,
        scheduler: SchedulerMode::UniformPair,
        steps,
        nu_coupling: NuCoupling::SqrtDim,
        seed: s,
    };
    let partition = partition_indices(obj.num_samples(), n0, n1, ShardMode::PerSubpopulation, s).unwrap();
    let pop = init_population(&cfg, obj, &partition, &vec![0.0; obj.dim()]).unwrap();
    (pop, cfg)
}

fn c4_gamma() -> Outcome {
    const SNAPSHOTS: usize = 20;
    const REPLICAS: u64 = 2000;
    const SPACING: u64 = 25;
    let eta = 0.05;
    let obj = quadratic(10, 1.0, seed(&[4]));
    let (mut pop, cfg) = population(&obj, 4, 4, 16, eta, 0, seed(&[4, 1]));
    let mut sched = rng::stream(seed(&[4, 2]), &[]);
    let mut reports = Vec::new();
    for k in 0..SNAPSHOTS {
        for _ in 0..SPACING {
            step_uniform_pair(&mut pop, &obj, &cfg.schedule, &mut sched).unwrap();
        }
        if compute_gamma(&pop) == 0.0 {
            return outcome(false, format!("snapshot {k} has no spread"));
        }
        let mut r = check_gamma_recursion(&pop, &obj, eta, REPLICAS, seed(&[4, 3, k as u64])).unwrap();
        r.name += &format!("[snapshot={k}]");
        reports.push(r);
    }
    let recursion_pass = reports.iter().all(|r| r.pass);
    let mut exact = Vec::new();
    for n in [3usize, 4, 5] {
        let (mut p, _) = population(&obj, n / 2, n - n / 2, 16, eta, 0, seed(&[4, 4, n as u64]));
        for (a, x) in p.agents_mut().iter_mut().zip(probe_points(&obj, n, seed(&[4, 5, n as u64]))) {
            a.model = x;
        }
        exact.push(pure_averaging_gamma_enumerated(&p));
    }
    let exact_pass = exact.iter().all(|r| r.stderr == 0.0 && r.measured <= ENUMERATION_TOL);
    let worst_dev = exact.iter().map(|r| r.measured).fold(0.0, f64::max);
    outcome(
        recursion_pass && exact_pass,
        format!("recursion: {}; eta=0 enumeration worst |deviation| = {worst_dev:.2e}", worst_failure(&reports)),
    )
}

/// Median final gaps of `μ_T` and `y_T` over `SEEDS` runs of a uniform-pair
/// population on the criterion-5 quadratic.
fn convergence_runs(tag: u64, n0: usize, n1: usize) -> (f64, f64) {
    const INTERACTIONS: u64 = 20_000;
    let obj = quadratic(10, C5_NOISE, seed(&[5]));
    let mut mu_gaps = Vec::new();
    let mut y_gaps = Vec::new();
    for s in 0..SEEDS {
        let (mut pop, cfg) = population(&obj, n0, n1, 16, 0.05, INTERACTIONS, seed(&[tag, s]));
        let opts = RunOptions {
            metric_cadence: INTERACTIONS,
            track_weighted_average: true,
            ..RunOptions::default()
        };
        let res = run(&mut pop, &obj, &cfg, &opts, &mut ()).unwrap();
        mu_gaps.push(obj.loss(&res.final_mu));
        y_gaps.push(obj.loss(res.weighted_average.as_ref().unwrap()));
    }
    (median(&mu_gaps), median(&y_gaps))
}

/// RMS norm of the per-sample gradient shifts in the convergence and
/// boundary criteria.
const C5_NOISE: f64 = 0.2;

fn c5_convergence() -> Outcome {
    let (mu, y) = convergence_runs(5, 4, 4);
    outcome(
        mu < 1e-4 && y <= 2.0 * mu,
        format!("median f(mu_T)-f* = {mu:.3e} (< 1e-4), median f(y_T)-f* = {y:.3e} (<= 2x)"),
    )
}

fn mean_at(rows: &[hdo::metrics::AggregateRow], step: u64, field: usize) -> (f64, f64) {
    rows.iter().find(|r| r.step == step).unwrap().values[field].unwrap()
}

fn c6_crossover() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = runner::parse_config(Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig2-desk.cfg")).unwrap();
    let mut zo4: PopulationSpec = cfg.populations.iter().find(|p| p.label == "zo16").unwrap().clone();
    zo4.label = "zo4".into();
    zo4.n0 = 4;
    cfg.populations.push(zo4);
    cfg.output_dir = Some(dir.path().to_path_buf());
    let out = runner::run_experiment(&cfg, None).unwrap();
    let agg = |label: &str| {
        let p = cfg.populations.iter().position(|p| p.label == label).unwrap();
        let series: Vec<Vec<MetricsRecord>> =
            out.cells.iter().filter(|c| c.population == p).map(|c| c.records.clone()).collect();
        aggregate_seeds(&series).unwrap()
    };
    let val = hdo::metrics::AGGREGATE_FIELDS.iter().position(|f| *f == "mean_val_loss").unwrap();
    let (fo, hy, zo) = (agg("fo4"), agg("hybrid"), agg("zo4"));
    let (f_m, f_s) = mean_at(&fo, cfg.steps, val);
    let (h_m, h_s) = mean_at(&hy, cfg.steps, val);
    let combined = f_s.hypot(h_s);
    let separation = (f_m - h_m) / combined;
    let hybrid_pass = h_m <= f_m && separation >= 1.0;
    let losing: Vec<u64> = fo
        .iter()
        .zip(&zo)
        .filter(|(f, z)| f.step > 0 && f.values[val].unwrap().0 >= z.values[val].unwrap().0)
        .map(|(f, _)| f.step)
        .collect();
    let fo_pass = losing.is_empty();
    outcome(
        hybrid_pass && fo_pass,
        format!(
            "step {}: hybrid {h_m:.5}±{h_s:.5} vs 4 FO {f_m:.5}±{f_s:.5} ({separation:.2} combined stderr, need >= 1); \
             4 FO not ahead of 4 ZO at {} of {} recorded steps",
            cfg.steps,
            losing.len(),
            fo.len() - 1
        ),
    )
}

fn c7_rv_variance() -> Outcome {
    const DRAWS: u64 = 20_000;
    let obj = logistic(200, 20, seed(&[7]));
    let shard: Vec<usize> = (0..obj.num_samples()).collect();
    let x = probe_points(&obj, 1, seed(&[7, 1])).remove(0);
    let variance = |rv: usize| {
        let cfg = EstimatorConfig::zeroth_order(EstimatorKind::ZoBiasedOneSided, rv, 1e-3, 2);
        let draw = |tag: u64| {
            let mut all = Vec::new();
            for chunk in monte_carlo(DRAWS, seed(&[7, rv as u64, tag]), |count, r| {
                (0..count).map(|_| estimate(&obj, &shard, &x, &cfg, r).unwrap().vector).collect::<Vec<_>>()
            }) {
                all.extend(chunk);
            }
            all
        };
        // center on an independent mean so the squared deviations are i.i.d.
        let mut center = VectorMoments::new(obj.dim());
        draw(0).iter().for_each(|g| center.push(g));
        let center = center.mean();
        let m: Moments = draw(1).iter().map(|g| hdo::vector::dist_sq(g, &center)).collect();
        (m.mean(), m.stderr())
    };
    let (v8, s8) = variance(8);
    let (v128, s128) = variance(128);
    let margin = (v8 - v128) / s8.hypot(s128);
    outcome(
        margin >= MARGIN_STDERRS,
        format!("Var(rv=8) = {v8:.4}±{s8:.4}, Var(rv=128) = {v128:.4}±{s128:.4}, margin {margin:.1} stderr"),
    )
}

/// RMS per-sample gradient noise of the speedup instance. Large enough that
/// the 1e-3 target sits near the stationary floor of small populations; with
/// a low floor every `n` is limited by the same contraction from the origin.
const C8_NOISE: f64 = 2.5;

fn c8_speedup() -> Outcome {
    const TARGET: f64 = 1e-3;
    const MAX_INTERACTIONS: u64 = 1_000_000;
    let obj = quadratic(10, C8_NOISE, seed(&[8]));
    let mut medians = Vec::new();
    for n in [2usize, 4, 8, 16] {
        let times: Vec<f64> = (0..SEEDS)
            .map(|s| {
                let (mut pop, cfg) = population(&obj, 0, n, 16, 0.05, MAX_INTERACTIONS, seed(&[8, n as u64, s]));
                let opts = RunOptions {
                    metric_cadence: MAX_INTERACTIONS,
                    target_gap: Some(TARGET),
                    stop_at_target: true,
                    ..RunOptions::default()
                };
                let res = run(&mut pop, &obj, &cfg, &opts, &mut ()).unwrap();
                res.target_hit.map_or(f64::INFINITY, |h| h.parallel_time)
            })
            .collect();
        medians.push((n, median(&times)));
    }
    let monotone = medians.windows(2).all(|w| w[1].1 <= w[0].1) && medians[0].1.is_finite();
    let listing: Vec<String> = medians.iter().map(|(n, t)| format!("n={n}: {t:.1}")).collect();
    outcome(monotone, format!("median parallel time to gap < 1e-3: {}", listing.join(", ")))
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fig2-desk.cfg");
    let run_into = |sub: &str| {
        let out = dir.path().join(sub);
        let status = Command::new(env!("CARGO_BIN_EXE_hdo"))
            .arg("run")
            .arg(&config)
            .arg("--out-dir")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let (a, b) = (run_into("a"), run_into("b"));
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).ok().unwrap_or_default())
        .collect();
    let ma = runner::read_manifest(a.join(runner::MANIFEST_FILE)).unwrap();
    let mb = runner::read_manifest(b.join(runner::MANIFEST_FILE)).unwrap();
    let pass = names.len() == 33 && differing.is_empty() && ma.outputs == mb.outputs;
    outcome(pass, format!("{} CSVs compared, {} differ; manifest hashes equal: {}", names.len(), differing.len(), ma.outputs == mb.outputs))
}

fn c10_boundary() -> Outcome {
    let (fo_mu, _) = convergence_runs(10, 0, 8);
    let (zo_mu, _) = convergence_runs(11, 8, 0);
    outcome(
        fo_mu < 1e-4 && zo_mu < 1e-4,
        format!("median f(mu_T)-f*: n0=0 {fo_mu:.3e}, n1=0 {zo_mu:.3e} (< 1e-4 after 20000 interactions)"),
    )
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria: [Criterion; 10] = [
        (1, "forward-mode ZO estimator unbiased", secs(30), c1_forward_unbiased),
        (2, "smoothing value-gap and gradient-bias bounds", secs(120), c2_smoothing),
        (3, "ZO second-moment and variance bounds", None, c3_moments),
        (4, "Gamma recursion and eta=0 enumeration", None, c4_gamma),
        (5, "strongly convex convergence and y_T", secs(10), c5_convergence),
        (6, "hybrid vs mono crossover", None, c6_crossover),
        (7, "rv variance monotonicity", secs(60), c7_rv_variance),
        (8, "speedup trend in n", None, c8_speedup),
        (9, "byte-identical reruns", None, c9_determinism),
        (10, "boundary populations converge", None, c10_boundary),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, title, budget, check) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let mut o = check();
        let elapsed = start.elapsed();
        if let Some(b) = budget {
            if elapsed > b {
                o.pass = false;
                o.detail += &format!("; over the {}s budget", b.as_secs());
            }
        }
        println!(
            "{} criterion {id:>2} ({title}) [{:.1}s]: {}",
            if o.pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        if std::env::var_os("HDO_ACCEPTANCE_STRICT").is_some() {
            std::process::exit(1);
        }
    } else {
        println!("all criteria passed");
    }
}
