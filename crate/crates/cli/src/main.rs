use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uqot::gamma::SweepParameter;
use uqot_cli::commands::{self, SolveArgs, SweepArgs};
use uqot_cli::io::InputError;

/// Entropic unbalanced optimal transport between measures and between
/// density operators.
///
/// Exit status: 0 on success, 1 on an input error (the message starts with
/// its diagnostic code), 2 when a solver does not converge or a check fails.
#[derive(Parser)]
#[command(name = "uqot", version)]
struct Cli {
    /// Seed for every random draw (gradcheck directions, selftest instances).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolveFlags {
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Store the optimal coupling and potentials in the result.
    #[arg(long = "emit-coupling")]
    emit_coupling: bool,
    /// Store the per-sweep objective and gradient norm (quantum only).
    #[arg(long = "emit-trace")]
    emit_trace: bool,
    /// Write result.json and summary.csv here instead of printing JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepFlags {
    #[arg(long)]
    instance: PathBuf,
    /// Comma-separated parameter values.
    #[arg(long)]
    schedule: Option<String>,
    /// Write sweep.json and sweep.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Unbalanced Sinkhorn on a classical instance.
    SolveClassical(SolveFlags),
    /// Minimize the operator functional on a quantum instance.
    SolveQuantum(SolveFlags),
    /// Solve along a decreasing epsilon schedule.
    SweepEps(SweepFlags),
    /// Solve along an increasing tau schedule (needs Tr rho = Tr sigma).
    SweepTau(SweepFlags),
    /// Compare the analytic gradient with central differences.
    Gradcheck {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-5)]
        h: f64,
    },
    /// Run the self-test suites.
    Selftest {
        /// Only suites whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
    },
}

impl From<SolveFlags> for SolveArgs {
    fn from(f: SolveFlags) -> Self {
        SolveArgs {
            instance: f.instance,
            tol: f.tol,
            max_iter: f.max_iter,
            emit_coupling: f.emit_coupling,
            emit_trace: f.emit_trace,
            out: f.out,
        }
    }
}

impl From<SweepFlags> for SweepArgs {
    fn from(f: SweepFlags) -> Self {
        SweepArgs { instance: f.instance, schedule: f.schedule, out: f.out, threads: None }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result: Result<_, InputError> = match cli.command {
        Command::SolveClassical(f) => commands::solve_classical(&f.into()),
        Command::SolveQuantum(f) => commands::solve_quantum(&f.into()),
        Command::SweepEps(f) => commands::run_sweep(SweepParameter::Epsilon, &f.into()),
        Command::SweepTau(f) => commands::run_sweep(SweepParameter::Tau, &f.into()),
        Command::Gradcheck { instance, h } => commands::gradcheck(&instance, h, cli.seed),
        Command::Selftest { filter } => commands::run_selftest(filter.as_deref(), cli.seed),
    };
    match result {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
