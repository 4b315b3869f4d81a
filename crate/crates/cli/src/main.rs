//! `roughheat` command line: solve, verify and study runs driven by JSON configs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use commands::Run;
use output::Output;

#[derive(Parser)]
#[command(name = "roughheat", version, about = "Variable-coefficient heat equation with rough forcing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve on the configured grid; writes the solution, a plot script and norm reports.
    Solve(Common),
    /// Run the assertion suite and write a pass/fail table.
    Verify(Common),
    /// Run a convergence or regularity study.
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        kind: StudyKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Mollify,
    L2decay,
    Holder,
}

pub enum Failure {
    Config(String),
    Numeric(anyhow::Error),
    Assertion(Vec<String>),
    Io(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.into())
    }
}

fn prepare(c: &Common) -> Result<Run, Failure> {
    let bytes = std::fs::read(&c.config).map_err(|e| Failure::Config(format!("{}: {e}", c.config.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| Failure::Config(format!("{}: {e}", c.config.display())))?;
    let (cfg, problem) = config::parse(text).map_err(Failure::Config)?;
    let spec = problem.build().map_err(|e| Failure::Config(format!("problem: {e}")))?;
    if let Some(n) = c.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--jobs: {e}")))?;
    }
    let seed = c.seed.unwrap_or(cfg.seed);
    let run = Run {
        out: Output::new(&c.out, &bytes, seed)?,
        cfg,
        spec: Arc::new(spec),
        seed,
    };
    commands::admissible(&run)?;
    Ok(run)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Solve(c) => commands::solve(&prepare(c)?),
        Command::Verify(c) => commands::verify(&prepare(c)?),
        Command::Study { common, kind } => {
            let run = prepare(common)?;
            match kind {
                StudyKind::Mollify => commands::study_mollify(&run),
                StudyKind::L2decay => commands::study_l2decay(&run),
                StudyKind::Holder => commands::study_holder(&run),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("numerical failure: {e:#}");
            ExitCode::from(3)
        }
        Err(Failure::Assertion(failed)) => {
            eprintln!("assertions failed: {}", failed.join("; "));
            ExitCode::from(4)
        }
        Err(Failure::Io(e)) => {
            eprintln!("i/o error: {e:#}");
            ExitCode::from(1)
        }
    }
}
