use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hdo::runner::{self, ExitStatus, Overrides};
use hdo::HdoError;

#[derive(Parser)]
#[command(name = "hdo", version, about = "Hybrid decentralized optimization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Seed list, e.g. `0..10` or `1,2,5`.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    metric_cadence: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (population, seed) cell and write metrics CSVs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the bound-checking suite.
    Verify {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic dataset, e.g. `gen-data classification samples=2000,dim=20 out.csv`.
    GenData { kind: String, params: String, out: PathBuf },
}

fn load(path: &PathBuf, common: &Common) -> Result<runner::ExperimentConfig, HdoError> {
    let mut cfg = runner::parse_config(path)?;
    let overrides = Overrides {
        seeds: common.seeds.as_deref().map(runner::parse_seed_list).transpose()?,
        out_dir: common.out_dir.clone(),
        metric_cadence: common.metric_cadence,
    };
    cfg.apply(&overrides)?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<ExitStatus, HdoError> {
    match cli.command {
        Command::Run { config, common } => {
            let cfg = load(&config, &common)?;
            let out = runner::run_experiment(&cfg, common.threads)?;
            println!(
                "wrote {} per-seed CSVs and {} aggregates to {}",
                out.seed_files.len(),
                out.aggregate_files.len(),
                out.dir.display()
            );
            Ok(ExitStatus::Success)
        }
        Command::Verify { config, common } => {
            let cfg = load(&config, &common)?;
            let report = match common.threads {
                Some(t) => rayon::ThreadPoolBuilder::new()
                    .num_threads(t)
                    .build()
                    .map_err(|e| HdoError::InvalidArgument(format!("cannot build thread pool: {e}")))?
                    .install(|| runner::run_theory_suite(&cfg))?,
                None => runner::run_theory_suite(&cfg)?,
            };
            let dir = cfg.output_dir();
            std::fs::create_dir_all(&dir).map_err(|e| HdoError::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
            report.write_json(dir.join(runner::REPORT_FILE))?;
            print!("{}", report.summary());
            if report.all_pass {
                Ok(ExitStatus::Success)
            } else {
                eprintln!("failed checks:");
                for f in report.failures() {
                    eprintln!("  {}", f.name);
                }
                Ok(ExitStatus::CheckFailure)
            }
        }
        Command::GenData { kind, params, out } => {
            runner::gen_data(&kind, &params, &out)?;
            Ok(ExitStatus::Success)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::ConfigError.code() } else { 0 });
        }
    };
    let status = execute(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        ExitStatus::of_error(&e)
    });
    ExitCode::from(status.code())
}
