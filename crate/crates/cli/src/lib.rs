//! Config-driven scenario runner for the `colombeau` toolkit.
//!
//! A scenario is a JSON document naming kernels, functions, an ε-grid, a
//! quadrature and one command to run. [`execute`] loads it, validates every
//! name and expression up front, runs the command and writes a CSV or JSON
//! report. Exit codes: 0 success, 1 numerical failure, 2 configuration or
//! parse failure.

pub mod commands;
pub mod config;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use thiserror::Error;

pub use config::{Command, Format, Scenario};
pub use report::{Cell, Report, Table};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {message}")]
    Config { context: String, message: String, position: Option<usize> },
    #[error(transparent)]
    Core(#[from] colombeau::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use colombeau::Error as E;
        match self {
            CliError::Core(
                E::NonFinite { .. }
                | E::Overflow { .. }
                | E::NotReachable { .. }
                | E::InsufficientSamples { .. }
                | E::NotLogGrowth(_)
                | E::Eval(_),
            ) => 1,
            _ => 2,
        }
    }

    fn kind(&self) -> String {
        match self {
            CliError::Config { position: Some(_), .. } => "SyntaxError".into(),
            CliError::Config { .. } => "ConfigError".into(),
            CliError::Io(_) => "IoError".into(),
            CliError::Core(e) => {
                let name = format!("{e:?}");
                name.split(['(', ' ', '{']).next().unwrap_or("Error").to_string()
            }
        }
    }

    fn to_report(&self, command: Command, config_sha256: String, seed: Option<u64>) -> Report {
        let mut r = Report::new(command.name(), config_sha256, seed);
        r.set("status", "error");
        r.set("exit_code", self.exit_code() as usize);
        r.set("error_kind", self.kind());
        r.set("message", self.to_string());
        if let CliError::Config { context, position, .. } = self {
            r.set("context", context.as_str());
            r.set("position", *position);
        }
        r
    }
}

/// Options that come from the command line rather than the config.
#[derive(Debug, Clone, Default)]
pub struct Invocation {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
}

fn infer_format(path: Option<&Path>) -> Format {
    match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    }
}

fn emit(report: &Report, out: Option<&Path>, format: Format) -> Result<(), CliError> {
    let bytes = report.render(format).map_err(|e| CliError::Io(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(&bytes).map_err(|e| CliError::Io(e.to_string()))
        }
    }
}

/// Runs one scenario end to end and returns the process exit code.
pub fn execute(command: Command, inv: &Invocation) -> i32 {
    let bytes = match std::fs::read(&inv.config) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", inv.config.display());
            return 2;
        }
    };
    let sha = config::sha256_hex(&bytes);

    let scenario = match Scenario::load(&bytes, command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            let format = inv.format.unwrap_or_else(|| infer_format(inv.out.as_deref()));
            if let Some(out) = &inv.out {
                if let Err(w) = emit(&e.to_report(command, sha, inv.seed), Some(out), format) {
                    eprintln!("error: {w}");
                }
            }
            return e.exit_code();
        }
    };

    let out: Option<PathBuf> = inv.out.clone().or_else(|| scenario.output.path.as_ref().map(PathBuf::from));
    let format = inv.format.or(scenario.output.format).unwrap_or_else(|| infer_format(out.as_deref()));

    let started = Instant::now();
    let result = commands::run(&scenario, inv.seed);
    eprintln!("{command}: {:.3} s", started.elapsed().as_secs_f64());

    let (report, code) = match result {
        Ok(r) => (r, 0),
        Err(e) => {
            eprintln!("error: {e}");
            (e.to_report(command, sha, inv.seed), e.exit_code())
        }
    };
    match emit(&report, out.as_deref(), format) {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
