use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use tsgd_core::experiment::{
    fit_rate, gamma_sweep, read_aggregate_csv, run_paths, verify::run_property_suite, write_aggregate_csv,
    write_sweep_csv, ExperimentConfig,
};
use tsgd_core::Method;

#[derive(Parser)]
#[command(name = "tsgd", version, about = "Tamed SGD experiments")]
struct Cli {
    /// Worker threads for sample paths (defaults to the number of cores).
    #[arg(long, global = true, env = "TSGD_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a multi-path experiment and write the aggregate CSV.
    Run {
        config: PathBuf,
        /// Output CSV; overrides the config's `output`, stdout when neither is set.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Repeat an experiment over several step offsets γ.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "tsgd,sgd")]
        optimizers: Vec<Method>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the property suite and print one line per check.
    Verify,
    /// Fit the log-log slope of the mean squared error in an aggregate CSV.
    Rate {
        aggregate: PathBuf,
        #[arg(long = "from")]
        from: u64,
        #[arg(long = "to")]
        to: u64,
    },
}

/// Outcome of a command that ran to completion.
enum Outcome {
    Ok,
    ChecksFailed,
}

fn emit(output: Option<PathBuf>, render: impl FnOnce(&mut dyn Write) -> tsgd_core::Result<()>) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            let mut buf = Vec::new();
            render(&mut buf)?;
            fs::write(&path, buf).with_context(|| format!("writing {}", path.display()))?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            render(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { config, output } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let out = run_paths(&cfg)?;
            eprintln!(
                "{} paths x {} steps, {} rows; diverged paths: {}; pathwise violations: {}; sandwich violations: {}",
                cfg.n_paths,
                cfg.n_steps,
                out.aggregate.len(),
                out.traces.iter().filter(|t| t.diverged_at.is_some()).count(),
                out.audit.pathwise_violations,
                out.audit.sandwich_violations
            );
            emit(output.or(cfg.output.clone()), |w| write_aggregate_csv(&out.aggregate, w))?;
            Ok(if out.audit.passed() { Outcome::Ok } else { Outcome::ChecksFailed })
        }
        Command::Sweep { config, gammas, optimizers, output } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let rows = gamma_sweep(&cfg, &gammas, &optimizers)?;
            emit(output, |w| write_sweep_csv(&rows, w))?;
            Ok(Outcome::Ok)
        }
        Command::Verify => {
            let outcomes = run_property_suite()?;
            let mut all = true;
            for o in &outcomes {
                all &= o.passed;
                println!(
                    "{} {} ({} cases, {} violations){}",
                    if o.passed { "PASS" } else { "FAIL" },
                    o.name,
                    o.cases,
                    o.violations,
                    if o.detail.is_empty() { String::new() } else { format!("; {}", o.detail) }
                );
            }
            Ok(if all { Outcome::Ok } else { Outcome::ChecksFailed })
        }
        Command::Rate { aggregate, from, to } => {
            let text = fs::read_to_string(&aggregate).with_context(|| format!("reading {}", aggregate.display()))?;
            let rows = read_aggregate_csv(&text)?;
            println!("{}", fit_rate(&rows, from, to)?);
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
