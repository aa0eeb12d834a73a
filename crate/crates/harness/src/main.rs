//! `mdlsim`: run, check and summarize experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mdlseq_harness::report::with_verdicts;
use mdlseq_harness::{
    check_bounds, emit_report, run_experiment, scenarios, summarize, BoundReport, ExperimentConfig,
    Format, RunRecord,
};

#[derive(Parser)]
#[command(
    name = "mdlsim",
    version,
    about = "Seeded MDL and Bayes prediction experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or built-in scenario and check its bounds.
    Run {
        /// Path to a TOML config, or the name of a built-in scenario.
        config: String,
        /// Override the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to `output_dir` or `out/<name>-<run id>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, env = "MDLSIM_JOBS")]
        jobs: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Check stored records against the bounds of a config.
    Check {
        records: PathBuf,
        config: String,
        /// The seed the run used, if it was overridden.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print a summary of stored records.
    Report {
        records: PathBuf,
        /// Steps at which to report median distances.
        #[arg(long, value_delimiter = ',')]
        checkpoints: Option<Vec<usize>>,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in scenarios.
    ListScenarios,
    /// Print the config of a built-in scenario.
    ShowScenario { name: String },
}

#[derive(Debug)]
enum Failure {
    Error(String),
    Bounds,
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.to_string())
    }
}

fn load_config(spec: &str, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let path = Path::new(spec);
    let mut cfg = if path.exists() {
        ExperimentConfig::load(path)?
    } else if let Some(s) = scenarios::find(spec) {
        s.config()?
    } else {
        return Err(Failure::Error(format!(
            "{spec}: no such file or built-in scenario"
        )));
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_verdicts(report: &BoundReport) {
    for v in &report.verdicts {
        println!(
            "[{}] {} {}: {:.6} (stderr {:.6}) vs {:.6}, margin {:.6}",
            if v.pass { "PASS" } else { "FAIL" },
            v.predictor,
            v.bound,
            v.statistic,
            v.stderr,
            v.limit,
            v.margin
        );
    }
}

fn verdict(report: &BoundReport) -> Result<(), Failure> {
    if report.all_pass() {
        Ok(())
    } else {
        Err(Failure::Bounds)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            jobs,
            format,
        } => {
            let cfg = load_config(&config, seed)?;
            let records = run_experiment(&cfg, jobs)?;
            let report = check_bounds(&records, &cfg)?;
            let summary = with_verdicts(
                summarize(&records, Some(&cfg.checkpoints()), cfg.seed),
                &report,
                &cfg,
            );
            let dir = out
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| {
                    PathBuf::from("out").join(format!("{}-{}", cfg.name, cfg.run_id()))
                });
            let paths = emit_report(&records, &summary, &dir, format)?;
            println!("run {} ({} rows)", cfg.run_id(), records.rows.len());
            println!("records: {}", paths.records.display());
            println!("summary: {}", paths.summary.display());
            print_verdicts(&report);
            verdict(&report)
        }
        Command::Check {
            records,
            config,
            seed,
        } => {
            let cfg = load_config(&config, seed)?;
            let records = RunRecord::load(&records)?;
            let report = check_bounds(&records, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            verdict(&report)
        }
        Command::Report {
            records,
            checkpoints,
            out,
        } => {
            let records = RunRecord::load(&records)?;
            let seed = records.rows.first().map_or(0, |r| r.seed);
            let summary = summarize(&records, checkpoints.as_deref(), seed);
            let text = serde_json::to_string_pretty(&summary)? + "\n";
            match out {
                Some(path) => std::fs::write(&path, text)
                    .map_err(|e| Failure::Error(format!("{}: {e}", path.display())))?,
                None => print!("{text}"),
            }
            Ok(())
        }
        Command::ListScenarios => {
            for s in scenarios::SCENARIOS {
                println!("{:<28}{}", s.name, s.summary);
            }
            Ok(())
        }
        Command::ShowScenario { name } => {
            let s = scenarios::find(&name)
                .ok_or_else(|| Failure::Error(format!("no scenario named {name}")))?;
            print!("{}", s.toml);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Bounds) => ExitCode::from(2),
        Err(Failure::Error(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
