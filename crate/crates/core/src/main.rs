use clap::{Args, Parser, Subcommand, ValueEnum};
use fracdiff::cli::{exit_code, load_config, run, write_atomic, Problem, Task};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "fracdiff", version, about = "Forward and backward solvers for time-fractional diffusion")]
struct Cli {
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Io {
    #[arg(long)]
    config: PathBuf,
    /// output CSV; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Mittag-Leffler evaluation
    Ml {
        #[command(subcommand)]
        what: MlCommand,
    },
    SolveFivp(Io),
    SolveFfvp {
        #[command(flatten)]
        io: Io,
        /// run even when the contraction factor is >= 1 (uncertified)
        #[arg(long)]
        force: bool,
    },
    Regularize(Io),
    IllposedDemo(Io),
    Experiment {
        #[command(subcommand)]
        what: ExperimentCommand,
    },
}

#[derive(Subcommand)]
enum MlCommand {
    Eval(Io),
}

#[derive(Subcommand)]
enum ExperimentCommand {
    OrderStability {
        #[command(flatten)]
        io: Io,
        #[arg(long, value_enum)]
        problem: ProblemArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemArg {
    Fivp,
    Ffvp,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let (task, io) = match cli.command {
        Command::Ml { what: MlCommand::Eval(io) } => (Task::MlEval, io),
        Command::SolveFivp(io) => (Task::SolveFivp, io),
        Command::SolveFfvp { io, force } => (Task::SolveFfvp { force }, io),
        Command::Regularize(io) => (Task::Regularize, io),
        Command::IllposedDemo(io) => (Task::IllposedDemo, io),
        Command::Experiment { what: ExperimentCommand::OrderStability { io, problem } } => {
            let p = match problem {
                ProblemArg::Fivp => Problem::Fivp,
                ProblemArg::Ffvp => Problem::Ffvp,
            };
            (Task::OrderStability(p), io)
        }
    };
    let result = load_config(&io.config).and_then(|cfg| run(task, &cfg));
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    for d in &outcome.diagnostics {
        eprintln!("{d}");
    }
    match &io.out {
        Some(path) => {
            if let Err(e) = write_atomic(path, &outcome.csv) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        }
        None => print!("{}", outcome.csv),
    }
    match outcome.verdict {
        Some((line, pass)) => {
            println!("{line}");
            ExitCode::from(if pass { 0 } else { 3 })
        }
        None => ExitCode::SUCCESS,
    }
}
