use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tgcd_cli::{invoke, Command, Invocation};

#[derive(Parser)]
#[command(name = "tgcd", version, about = "Compact difference and two-grid solvers for 2D periodic Burgers' equation")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run every ladder row of a configuration and write CSV plus run record.
    Run(Opts),
    /// Like `run`, and also report NCD / ST-TGCD speedups (needs `scheme.kind = both`).
    Compare(Opts),
}

#[derive(Args)]
struct Opts {
    config: PathBuf,
    /// Include ladder rows marked `ladder.full_row`.
    #[arg(long)]
    full: bool,
    /// Directory that replaces the one in `output.prefix`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of rows solved concurrently.
    #[arg(long, value_name = "N", default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, o) = match &cli.command {
        Sub::Run(o) => (Command::Run, o),
        Sub::Compare(o) => (Command::Compare, o),
    };
    let inv = Invocation {
        command,
        config: &o.config,
        full: o.full,
        out_dir: o.out.as_deref(),
        threads: o.threads as usize,
    };
    match invoke(&inv) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
