//! `nhmc` — construct nonhomogeneous Markov chains, analyze their ergodic
//! structure, and verify the CLT and moderate deviation behaviour of
//! bounded additive functionals.
//!
//! One subcommand per analysis; every run is driven by a JSON config and
//! produces a deterministic JSON or CSV report. `NHMC_THREADS` caps the
//! worker count without affecting any result byte.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nhmc_cli::config::{parse_config, Analysis};
use nhmc_cli::report::{emit_report, Format};
use nhmc_cli::runner::run_experiment;
use nhmc_cli::{CliError, EXIT_VERDICT_FAIL};

#[derive(Parser)]
#[command(name = "nhmc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate the schedule's limit matrix: Dobrushin coefficient,
    /// stationary vector, period, cyclic classes, strong-ergodicity
    /// certification.
    Validate(RunArgs),
    /// Emit the convergence diagnostic curves for the schedule.
    Diagnose(RunArgs),
    /// Monte Carlo central-limit verification with a PASS/FAIL verdict.
    Clt(RunArgs),
    /// Moderate deviation estimation over an (n, x) grid.
    Mdp(RunArgs),
    /// Exact small-instance distribution of the additive functional.
    Oracle(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn analysis(&self) -> Analysis {
        match self {
            Command::Validate(_) => Analysis::Validate,
            Command::Diagnose(_) => Analysis::Diagnose,
            Command::Clt(_) => Analysis::Clt,
            Command::Mdp(_) => Analysis::Mdp,
            Command::Oracle(_) => Analysis::Oracle,
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::Validate(a)
            | Command::Diagnose(a)
            | Command::Clt(a)
            | Command::Mdp(a)
            | Command::Oracle(a) => a,
        }
    }
}

fn init_thread_pool() -> Result<(), CliError> {
    if let Ok(raw) = std::env::var("NHMC_THREADS") {
        let threads: usize = raw.parse().map_err(|_| {
            CliError::schema("NHMC_THREADS", format!("not a thread count: '{raw}'"))
        })?;
        if threads == 0 {
            return Err(CliError::schema("NHMC_THREADS", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Numeric(format!("thread pool init failed: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    init_thread_pool()?;
    let args = cli.command.args();
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = parse_config(&text, args.seed)?;
    let invoked = cli.command.analysis();
    if cfg.analysis != invoked {
        return Err(CliError::schema(
            "analysis",
            format!(
                "config selects '{}' but the '{}' subcommand was invoked",
                cfg.analysis.as_str(),
                invoked.as_str()
            ),
        ));
    }
    let envelope = run_experiment(&cfg)?;
    let bytes = emit_report(&envelope, args.format)?;
    match &args.out {
        Some(path) => std::fs::write(path, &bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes)?;
        }
    }
    if envelope.verdict_pass() == Some(false) {
        return Ok(ExitCode::from(EXIT_VERDICT_FAIL as u8));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("nhmc: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
