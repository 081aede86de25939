use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nclp::harness::run::{EXIT_CHECK_FAILED, EXIT_PASS, EXIT_USAGE};
use nclp::harness::{emit_fixtures, read_config, run_experiment, Command, HarnessError};

#[derive(Parser)]
#[command(name = "nclp", version, about = "Experiments on noncommutative L_p spaces over matrix bundles")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every check defined by the config.
    Run(RunArgs),
    /// Trace axioms and conditional-expectation reports.
    CheckAxioms(RunArgs),
    /// Duality between L_p and L_q with the extremal witness.
    CheckDuality(RunArgs),
    /// Martingale, double-sequence and weighted-average experiments.
    RunMartingale(RunArgs),
    /// Write the bundled fixture configs and their expected artifacts.
    EmitFixtures(EmitArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Args)]
struct EmitArgs {
    /// Emit only this config instead of the bundled set.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed_override: Option<u64>,
}

fn run(args: RunArgs, cmd: Command) -> Result<i32, HarnessError> {
    let mut cfg = read_config(&args.config)?;
    if let Some(s) = args.seed_override {
        cfg.seed = s;
    }
    let art = run_experiment(&cfg, cmd)?;
    art.write(&cfg, &args.out)?;
    for c in &art.summary.checks {
        let verdict = if c.pass { "pass" } else { "FAIL" };
        println!("{verdict} {} {:e} (tol {:e})", c.name, c.worst_residual, c.tolerance);
    }
    Ok(if art.summary.passed() { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn emit(args: EmitArgs) -> Result<i32, HarnessError> {
    let only = args.config.as_deref().map(read_config).transpose()?;
    let ok = emit_fixtures(&args.out, only.as_ref(), args.seed_override)?;
    Ok(if ok { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Cmd::Run(a) => run(a, Command::Run),
        Cmd::CheckAxioms(a) => run(a, Command::CheckAxioms),
        Cmd::CheckDuality(a) => run(a, Command::CheckDuality),
        Cmd::RunMartingale(a) => run(a, Command::RunMartingale),
        Cmd::EmitFixtures(a) => emit(a),
    };
    let code = result.unwrap_or_else(|e| {
        eprintln!("nclp: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
