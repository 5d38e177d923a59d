use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod analyze;
mod output;
mod run;
mod sweep;

/// Calabi flow laboratory: run flows, analyze traces, verify the implementation.
#[derive(Parser, Debug)]
#[command(name = "calabi", version, about)]
struct Cli {
    /// Root directory for outputs that have no explicit location.
    #[arg(long, global = true, env = "CALABI_OUT", default_value = "calabi-out")]
    out_root: PathBuf,

    /// More log output on stderr (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Disable data parallelism inside analyses and verification.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the flow described by a manifest; writes the trace, checkpoints,
    /// the final state and a summary.
    Run(run::RunArgs),
    /// Analyze a trace file; writes a report and plot-ready series.
    Analyze(analyze::AnalyzeArgs),
    /// Run acceptance criteria and report pass/fail per criterion.
    Verify(VerifyArgs),
    /// Run every manifest matching a glob concurrently and calibrate ε₀_max
    /// over the convergent ones.
    Sweep(sweep::SweepArgs),
    /// Write a synthetic trace with analytically known statistics.
    Synth(analyze::SynthArgs),
}

#[derive(clap::Args, Debug)]
struct VerifyArgs {
    /// Suite (all, identities, oracles, convergence, persistence) or
    /// comma-separated criterion numbers.
    #[arg(default_value = "all")]
    suite: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let exec = if cli.sequential {
        calabi_core::par::Exec::Sequential
    } else {
        calabi_core::par::Exec::Parallel
    };

    let result = match cli.command {
        Command::Run(args) => run::cmd_run(&args, &cli.out_root),
        Command::Analyze(args) => analyze::cmd_analyze(&args, exec),
        Command::Verify(args) => cmd_verify(&args, exec),
        Command::Sweep(args) => sweep::cmd_sweep(&args, &cli.out_root, exec),
        Command::Synth(args) => analyze::cmd_synth(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error[{}]: {e:#}", output::error_class(&e));
            ExitCode::FAILURE
        }
    }
}

fn cmd_verify(args: &VerifyArgs, exec: calabi_core::par::Exec) -> anyhow::Result<ExitCode> {
    use calabi_core::verify::{select, Verifier};
    let ids = select(&args.suite)?;
    let verifier = Verifier::new(exec);
    let mut failed = Vec::new();
    for id in ids {
        let o = verifier.check(id);
        println!("{o}");
        if !o.passed {
            failed.push(format!("criterion {} ({})", o.id, o.name));
        }
    }
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &failed {
            eprintln!("error[criterion_failed]: {f}");
        }
        Ok(ExitCode::FAILURE)
    }
}
