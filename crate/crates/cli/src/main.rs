use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use colombeau_cli::{execute, Command, Format, Invocation};

/// Run a generalized-kernel scenario from a JSON config and write a report.
#[derive(Debug, Parser)]
#[command(name = "colombeau", version)]
struct Args {
    /// What to run; must agree with `run.command` in the config if present.
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    config: PathBuf,
    /// Report path; defaults to `output.path` in the config, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads, 0 = one per core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Reserved for jittered sampling grids; echoed in the report.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build_global() {
            eprintln!("warning: {e}");
        }
    }
    let inv = Invocation { config: args.config, out: args.out, format: args.format, seed: args.seed };
    ExitCode::from(execute(args.command, &inv) as u8)
}
