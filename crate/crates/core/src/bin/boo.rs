//! `boo` command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or IO error, 2 numerical failure
//! (including `run`/`sweep` where an estimator failed in every repetition;
//! the output is still written).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use boo_core::datagen::{sample_stream, write_stream_csv};
use boo_core::harness::emit::{to_csv_string, to_json_string};
use boo_core::harness::{emit, run_experiment, sensitivity_sweep, ConfigFile, ExperimentResult, OutputFormat, Sweep};
use boo_core::theory::run_suite;
use boo_core::{default_t0, BooError};

#[derive(Parser)]
#[command(name = "boo", version, about = "One-pass Bayesian estimation for GLM streams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Worker threads for repetitions.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<ConfigFile, BooError> {
        let mut cfg = ConfigFile::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(reps) = self.reps {
            cfg.repetitions = reps;
        }
        if let Some(threads) = self.threads {
            cfg.threads = Some(threads);
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write sampled streams as CSV (`y,x_1..x_p`), one file per repetition.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run an experiment and emit tidy results.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Repeat an experiment over warm-start multipliers or initial offsets.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated warm-start multipliers M.
        #[arg(long, value_delimiter = ',', conflicts_with = "offset")]
        m: Vec<f64>,
        /// Comma-separated initial distances ‖θ₀ − θ⋆‖.
        #[arg(long, value_delimiter = ',')]
        offset: Vec<f64>,
    },
    /// Run the numerical theory checks and print a JSON report.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stream length per check.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default warm-start length ⌈M(p ln(p ∨ 3) + x)⌉.
    T0 {
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 5.0)]
        x: f64,
        #[arg(long, default_value_t = 1.0)]
        m: f64,
    },
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), BooError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| BooError::Io { path: path.to_path_buf(), source: e }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| BooError::Io { path: PathBuf::from("<stdout>"), source: e }),
    }
}

/// Numerical failure when some estimator failed in every repetition.
fn check_failures(result: &ExperimentResult) -> Result<(), BooError> {
    let reps = result.metadata.repetitions;
    match result.metadata.estimators.iter().find(|e| reps > 0 && result.failures(e) >= reps) {
        Some(label) => Err(BooError::Failed(format!("{label} failed in all {reps} repetitions"))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), BooError> {
    match cli.command {
        Command::Simulate { common } => {
            let cfg = common.load()?;
            let reps = common.reps.unwrap_or(1);
            let resolved = cfg.resolve()?;
            let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir).map_err(|e| BooError::Io { path: dir.clone(), source: e })?;
            for rep in 0..reps {
                let obs: Vec<_> = sample_stream(&resolved.design, &resolved.truth, rep as u64)?.collect();
                let path = dir.join(format!("stream_{rep:04}.csv"));
                write_stream_csv(&path, &obs)?;
                eprintln!("wrote {}", path.display());
            }
        }
        Command::Run { common } => {
            let cfg = common.load()?;
            let result = run_experiment(&cfg.resolve()?)?;
            match &cfg.output {
                Some(path) => emit(&result, common.format, path)?,
                None => write_output(
                    None,
                    &match common.format {
                        OutputFormat::Csv => to_csv_string(&result.rows),
                        OutputFormat::Json => to_json_string(&result),
                    },
                )?,
            }
            check_failures(&result)?;
        }
        Command::Sweep { common, m, offset } => {
            let cfg = common.load()?;
            let sweep = match (m.is_empty(), offset.is_empty()) {
                (false, true) => Sweep::M(m),
                (true, false) => Sweep::Offset(offset),
                _ => return Err(BooError::Config("give exactly one of --m or --offset".into())),
            };
            let points = sensitivity_sweep(&cfg, &sweep)?;
            let text = match common.format {
                OutputFormat::Json => serde_json::to_string_pretty(&points).expect("serializable") + "\n",
                OutputFormat::Csv => {
                    let mut text = String::from("sweep_value,estimator,t,metric,value,rep_count\n");
                    for point in &points {
                        for line in to_csv_string(&point.result.rows).lines().skip(1) {
                            text.push_str(&format!("{},{line}\n", point.value));
                        }
                    }
                    text
                }
            };
            write_output(cfg.output.as_deref(), &text)?;
            for point in &points {
                check_failures(&point.result)?;
            }
        }
        Command::Check { seed, n, out } => {
            let report = run_suite(seed, n)?;
            write_output(out.as_deref(), &(serde_json::to_string_pretty(&report).expect("serializable") + "\n"))?;
            if !report.all_hold() {
                return Err(BooError::Failed("theory checks did not all hold".into()));
            }
        }
        Command::T0 { p, x, m } => {
            if p == 0 || m.is_nan() || m < 0.0 {
                return Err(BooError::Config("need p ≥ 1 and M ≥ 0".into()));
            }
            println!("{}", default_t0(p, x, m));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
