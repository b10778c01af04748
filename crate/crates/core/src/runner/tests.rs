use super::*;
use crate::estimators::EstimatorKind;
use crate::metrics::read_metrics_csv;
use crate::objectives::{load_csv_dataset, CsvFormat, StochasticObjective};
use crate::protocol::{LrSchedule, NuCoupling, SchedulerMode};

const FIG2: &str = include_str!("../../configs/fig2-desk.cfg");
const VERIFY: &str = include_str!("../../configs/verify-desk.cfg");

fn config_key(text: &str) -> String {
    match ExperimentConfig::from_toml_str(text) {
        Err(HdoError::Config { key, .. }) => key,
        other => panic!("expected a config error, got {other:?}"),
    }
}

const QUAD_BASE: &str = r#"
name = "q"
seeds = [0, 1, 2]
steps = 30
metric_cadence = 10
scheduler = "uniform_pair"

[objective]
kind = "quadratic"
dim = 4
samples = 32
"#;

fn quad_with(populations: &str) -> String {
    format!("{QUAD_BASE}\n{populations}")
}

const TWO_POPS: &str = r#"
[[population]]
label = "fo"
n0 = 0
n1 = 3
eta = 0.05

[[population]]
label = "mix"
n0 = 2
n1 = 2
eta = 0.05
zo = { rv = 4 }
"#;

#[test]
fn shipped_configs_parse() {
    let cfg = ExperimentConfig::from_toml_str(FIG2).unwrap();
    let shape: Vec<(&str, usize, usize)> = cfg.populations.iter().map(|p| (p.label.as_str(), p.n0, p.n1)).collect();
    assert_eq!(shape, [("fo4", 0, 4), ("zo16", 16, 0), ("hybrid", 16, 4)]);
    assert_eq!(cfg.scheduler, SchedulerMode::RandomMatching);
    assert_eq!(cfg.steps, 500);
    assert_eq!(cfg.seeds.len(), 10);
    for p in &cfg.populations {
        assert_eq!(p.schedule(), LrSchedule::constant(0.01));
        assert_eq!((p.zo.rv, p.zo.batch_size, p.fo.batch_size), (128, 2, 2));
        assert_eq!(p.momentum, 0.0);
    }

    let v = ExperimentConfig::from_toml_str(VERIFY).unwrap();
    assert!(v.populations.is_empty() && v.objective.is_none());
    assert_eq!(v.verify.unwrap(), VerifyConfig::default());
}

#[test]
fn defaults_follow_the_regression_table() {
    let cfg = ExperimentConfig::from_toml_str(&quad_with("[[population]]\nlabel = \"a\"\nn0 = 1\nn1 = 1\n")).unwrap();
    let p = &cfg.populations[0];
    assert_eq!(p.schedule(), LrSchedule::constant(DEFAULT_ETA));
    assert_eq!(DEFAULT_ETA, 0.01);
    assert_eq!((p.zo.kind, p.zo.rv, p.zo.batch_size), (EstimatorKind::ZoUnbiasedForward, 128, 2));
    assert_eq!(p.fo.batch_size, 2);
    assert_eq!(p.momentum, 0.0);
    assert_eq!(p.nu_coupling, NuCoupling::SqrtDim);

    let bare = ExperimentConfig::from_toml_str("name = \"x\"").unwrap();
    assert_eq!(bare.steps, 500);
    assert_eq!(bare.metric_cadence, 10);
    assert_eq!(bare.seeds, (0..10).collect::<Vec<u64>>());
    assert_eq!(bare.output_dir(), std::path::Path::new("out/x"));
}

#[test]
fn rejects_empty_population_and_negative_eta() {
    assert_eq!(config_key(&quad_with("[[population]]\nlabel = \"a\"\nn0 = 0\nn1 = 0\n")), "population[0].n0");
    assert_eq!(
        config_key(&quad_with("[[population]]\nlabel = \"a\"\nn0 = 1\nn1 = 1\neta = -0.1\n")),
        "population[0].eta"
    );
}

#[test]
fn schema_violations_name_the_key() {
    assert_eq!(config_key("name = \"x\"\nstepz = 3\n"), "stepz");
    assert_eq!(config_key(&quad_with("[[population]]\nlabel = \"a\"\nn0 = 1\nn1 = 1\nrv = 8\n")), "population.rv");
    assert_eq!(
        config_key(&quad_with("[[population]]\nlabel = \"a\"\nn0 = 1\nn1 = 1\neta = \"fast\"\n")),
        "population.eta"
    );
    assert_eq!(config_key("seeds = [1]\n"), "name");
    let dup = quad_with("[[population]]\nlabel = \"a\"\nn0 = 1\nn1 = 1\n[[population]]\nlabel = \"a\"\nn0 = 2\nn1 = 0\n");
    assert_eq!(config_key(&dup), "population[1].label");
    assert_eq!(
        config_key(&quad_with("[[population]]\nlabel = \"a\"\nn0 = 1\nn1 = 1\neta = 0.1\nschedule = { type = \"constant\", eta = 0.1 }\n")),
        "population[0].eta"
    );
    assert_eq!(config_key(&format!("{QUAD_BASE}\n[data]\nsource = \"synthetic\"\n")), "data");
    assert_eq!(config_key("name = \"x\"\n[[population]]\nlabel = \"a\"\nn0 = 1\nn1 = 1\n"), "objective");
    assert_eq!(config_key("name = \"x\"\n[verify]\ngamma_replicas = 10\n"), "verify.gamma_replicas");
}

#[test]
fn toml_round_trip() {
    let cfg = ExperimentConfig::from_toml_str(FIG2).unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    let sched = quad_with(
        "[[population]]\nlabel = \"w\"\nn0 = 2\nn1 = 2\nnu_coupling = { constant = 3.0 }\n\
         schedule = { type = \"warmup_cosine\", eta_max = 0.1, eta_min = 0.0, warmup_steps = 5, total_steps = 30 }\n",
    );
    let cfg = ExperimentConfig::from_toml_str(&sched).unwrap();
    assert_eq!(cfg.populations[0].nu_coupling, NuCoupling::Constant(3.0));
    assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
}

#[test]
fn overrides_and_seed_lists() {
    assert_eq!(parse_seed_list("0..3,7, 9").unwrap(), [0, 1, 2, 7, 9]);
    assert!(parse_seed_list("3..3").is_err());
    assert!(parse_seed_list("a").is_err());
    let mut cfg = ExperimentConfig::from_toml_str(FIG2).unwrap();
    cfg.apply(&Overrides {
        seeds: Some(vec![4]),
        out_dir: Some("elsewhere".into()),
        metric_cadence: Some(25),
    })
    .unwrap();
    assert_eq!((cfg.seeds.as_slice(), cfg.metric_cadence), (&[4u64][..], 25));
    assert_eq!(cfg.output_dir(), std::path::Path::new("elsewhere"));
    let err = cfg.apply(&Overrides {
        metric_cadence: Some(0),
        ..Overrides::default()
    });
    assert!(matches!(err, Err(HdoError::Config { ref key, .. }) if key == "metric_cadence"));
}

#[test]
fn git_blob_hash_matches_git() {
    // `git hash-object` in a sha256 repository
    assert_eq!(git_blob_sha256(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    assert_eq!(git_blob_sha256(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
}

#[test]
fn grid_writes_one_csv_per_cell_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::from_toml_str(&quad_with(TWO_POPS)).unwrap();
    cfg.output_dir = Some(dir.path().join("a"));
    let out = run_experiment(&cfg, Some(1)).unwrap();
    assert_eq!(out.seed_files.len(), 6);
    assert_eq!(out.aggregate_files.len(), 2);
    let mut names: Vec<String> = std::fs::read_dir(&out.dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "fo_aggregate.csv",
            "fo_seed0.csv",
            "fo_seed1.csv",
            "fo_seed2.csv",
            "manifest.json",
            "mix_aggregate.csv",
            "mix_seed0.csv",
            "mix_seed1.csv",
            "mix_seed2.csv"
        ]
    );
    let recs = read_metrics_csv(&out.dir.join("mix_seed1.csv")).unwrap();
    assert_eq!(recs.iter().map(|r| r.step).collect::<Vec<_>>(), [0, 10, 20, 30]);
    assert!(recs[3].mu_loss_gap.unwrap() < recs[0].mu_loss_gap.unwrap());

    let manifest = read_manifest(&out.manifest).unwrap();
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.outputs.len(), 8);
    for e in &manifest.outputs {
        let bytes = std::fs::read(out.dir.join(&e.path)).unwrap();
        assert_eq!(e.sha256, git_blob_sha256(&bytes));
        assert_eq!(e.bytes, bytes.len() as u64);
    }

    cfg.output_dir = Some(dir.path().join("b"));
    let again = run_experiment(&cfg, None).unwrap();
    for (a, b) in out.seed_files.iter().chain(&out.aggregate_files).zip(again.seed_files.iter().chain(&again.aggregate_files)) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }
    let m2 = read_manifest(&again.manifest).unwrap();
    assert_eq!(manifest.outputs, m2.outputs);
}

#[test]
fn cells_share_partition_per_seed_only() {
    assert_eq!(partition_seed(5, 1), partition_seed(5, 1));
    assert_ne!(partition_seed(5, 1), partition_seed(5, 2));
    assert_ne!(cell_seed(5, 1, 0), cell_seed(5, 1, 1));
    assert_ne!(cell_seed(5, 1, 0), cell_seed(5, 2, 0));
}

#[test]
fn synthetic_data_gets_validation_split() {
    let text = r#"
name = "c"
[objective]
kind = "logistic_l2"
[data]
source = "synthetic"
samples = 50
dim = 3
validation_samples = 20
"#;
    let cfg = ExperimentConfig::from_toml_str(text).unwrap();
    let problem = build_problem(&cfg).unwrap();
    assert_eq!(problem.objective.num_samples(), 50);
    assert_eq!(problem.validation.as_ref().unwrap().num_samples(), 20);
    assert_eq!(problem.objective.dim(), 3);
}

#[test]
fn csv_data_source_and_gen_data() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    gen_data("classification", "samples=40,dim=3,label_noise=0,seed=4", &train).unwrap();
    let ds = load_csv_dataset(&train, CsvFormat { has_header: true }).unwrap();
    assert_eq!((ds.len(), ds.dim()), (40, 3));
    assert!(matches!(gen_data("images", "", &train), Err(HdoError::Config { .. })));
    assert!(matches!(gen_data("classification", "depth=3", &train), Err(HdoError::Config { ref key, .. }) if key == "depth"));
    assert!(matches!(gen_data("classification", "dim=x", &train), Err(HdoError::Config { ref key, .. }) if key == "dim"));

    let text = format!(
        "name = \"c\"\nseeds = [0]\nsteps = 5\noutput_dir = {:?}\n[objective]\nkind = \"sigmoid_sq_nonconvex\"\n\
         [data]\nsource = \"csv\"\npath = {:?}\nhas_header = true\nvalidation_path = {:?}\n\
         [[population]]\nlabel = \"p\"\nn0 = 1\nn1 = 1\n",
        dir.path().join("out"),
        train,
        train
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let out = run_experiment(&cfg, None).unwrap();
    let recs = read_metrics_csv(&out.seed_files[0]).unwrap();
    assert!(recs.iter().all(|r| r.mean_val_loss.is_some() && r.mean_val_acc.is_some()));
}

#[test]
fn exit_status_mapping() {
    assert_eq!(ExitStatus::of_error(&HdoError::config("k", "m")).code(), 1);
    assert_eq!(ExitStatus::of_error(&HdoError::InvalidArgument("x".into())).code(), 2);
    assert_eq!(ExitStatus::CheckFailure.code(), 3);
    assert_eq!(ExitStatus::Success.code(), 0);
}

fn small_suite(nu_scale: f64) -> SuiteReport {
    let text = format!(
        "name = \"s\"\nmaster_seed = 3\n[verify]\ndims = [3]\nnus = [0.01]\nnu_scale = {nu_scale}\nprobes = 2\n\
         mc_samples = 20000\nmoment_samples = 5000\ngamma_snapshots = 2\ngamma_replicas = 1000\n\
         gradcheck_points = 5\nlogistic_samples = 8\n"
    );
    run_theory_suite(&ExperimentConfig::from_toml_str(&text).unwrap()).unwrap()
}

fn find<'a>(r: &'a SuiteReport, prefix: &str) -> &'a crate::theory_checks::BoundCheckReport {
    r.checks.iter().find(|c| c.name.starts_with(prefix)).unwrap_or_else(|| panic!("no check {prefix}"))
}

#[test]
fn reduced_suite_passes_and_scales_with_nu() {
    let base = small_suite(1.0);
    assert!(base.all_pass, "{}", base.summary());
    // 2 objectives × 4 checks, bias, 2 snapshots, 3 gradchecks, 3 enumerations
    assert_eq!(base.checks.len(), 8 + 1 + 2 + 3 + 3);
    assert_eq!(base.failures().count(), 0);

    let big = small_suite(100.0);
    let b0 = find(&base, "smoothing_grad_bias[logistic");
    let b1 = find(&big, "smoothing_grad_bias[logistic");
    assert!(b1.name.contains("nu=1"), "{}", b1.name);
    assert!(b1.measured > b0.measured);
    assert!(b1.bound > b0.bound);
    assert!(b1.pass, "{b1:?}");
    assert!(find(&base, "smoothing_value_gap[quadratic").stderr == 0.0);
}

#[test]
fn suite_is_reproducible_and_report_round_trips() {
    let a = small_suite(1.0);
    assert_eq!(a, small_suite(1.0));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(REPORT_FILE);
    a.write_json(&path).unwrap();
    assert_eq!(SuiteReport::read_json(&path).unwrap(), a);
    let summary = a.summary();
    assert_eq!(summary.lines().count(), a.checks.len() + 1);
    assert!(summary.lines().all(|l| l.starts_with("PASS") || l.contains("0 failed")));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn seed_ranges_expand(ranges in prop::collection::vec((0u64..50, 1u64..10), 1..5)) {
            let text: Vec<String> = ranges.iter().map(|(a, len)| format!("{a}..{}", a + len)).collect();
            let expected: Vec<u64> = ranges.iter().flat_map(|&(a, len)| a..a + len).collect();
            prop_assert_eq!(parse_seed_list(&text.join(",")).unwrap(), expected);
        }

        #[test]
        fn population_tables_round_trip(
            n0 in 0usize..20,
            n1 in 0usize..20,
            eta in 1e-6f64..1.0,
            momentum in 0.0f64..0.99,
            rv in 1usize..300,
            steps in 1u64..10_000,
        ) {
            prop_assume!(n0 + n1 >= 2);
            let text = quad_with(&format!(
                "[[population]]\nlabel = \"p\"\nn0 = {n0}\nn1 = {n1}\neta = {eta:?}\nmomentum = {momentum:?}\nzo = {{ rv = {rv} }}\n"
            ))
            .replace("steps = 30", &format!("steps = {steps}"));
            let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
            prop_assert_eq!(cfg.populations[0].eta, Some(eta));
            prop_assert_eq!(cfg.populations[0].zo.rv, rv);
            prop_assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
        }
    }
}
