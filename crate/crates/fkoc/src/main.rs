use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fkoc::commands::{self, Context};
use fkoc::{CliResult, RunConfig};

#[derive(Parser)]
#[command(
    name = "fkoc",
    version,
    about = "Fractional operators with analytic kernels and optimal control"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Primary output (CSV); standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Also write the results as JSON to this path.
    #[arg(long, global = true)]
    json: Option<PathBuf>,

    /// Write the operator matrix as CSV (row, col, re, im).
    #[arg(long, global = true)]
    dump_operator: Option<PathBuf>,

    /// Override the number of grid nodes.
    #[arg(long, global = true)]
    grid_n: Option<usize>,

    /// Override the seed for randomized trials.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel properties: sup bounds, thresholds, reciprocal radius.
    KernelInfo,
    /// Apply an operator to a sampled function (CSV columns t, re, im).
    Apply {
        /// int-left, int-right, caputo-left, caputo-right, rl-left, rl-right,
        /// combined-caputo, combined-int or combined-rl.
        op: String,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run identity checks: duality, parts, semigroup, norm, gronwall or all.
    Verify {
        suite: String,
        /// Markdown report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve the control problem by forward-backward sweep.
    Solve {
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Evaluate the extremal residuals of a candidate.
    CheckExtremal {
        /// Candidate CSV (t, x, u, lambda); config expressions when omitted.
        #[arg(long)]
        candidate: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Gronwall bound for the configured f and g.
    Gronwall,
    /// Perturb the control of a candidate and fit the state response.
    Continuity {
        #[arg(long)]
        candidate: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<bool> {
    let path = cli
        .config
        .ok_or_else(|| fkoc::CliError::config("--config is required"))?;
    let mut ctx = Context::new(RunConfig::load(&path)?);
    if let Some(n) = cli.grid_n {
        ctx.n = n;
    }
    if let Some(s) = cli.seed {
        ctx.seed = s;
    }
    ctx.out = cli.out.or(ctx.out);
    ctx.json = cli.json.or(ctx.json);
    ctx.dump_operator = cli.dump_operator;
    match cli.command {
        Command::KernelInfo => commands::kernel_info(&ctx),
        Command::Apply { op, input } => commands::apply(&ctx, &op, &input),
        Command::Verify { suite, report } => {
            ctx.report = report.or(ctx.report);
            commands::verify(&ctx, &suite)
        }
        Command::Solve { report } => {
            ctx.report = report.or(ctx.report);
            commands::solve(&ctx)
        }
        Command::CheckExtremal { candidate, report } => {
            ctx.report = report.or(ctx.report);
            ctx.candidate = candidate;
            commands::check_extremal(&ctx)
        }
        Command::Gronwall => commands::gronwall(&ctx),
        Command::Continuity { candidate } => {
            ctx.candidate = candidate;
            commands::continuity(&ctx)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FKOC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
