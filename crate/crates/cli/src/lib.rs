//! Command-line front end: `partition`, `score`, `mix`, `perturb` and `stats`.
//!
//! Exit codes: 0 on success (warnings allowed), 1 on validation failure or
//! on warnings under `--strict`, 2 when the input is missing or empty.

pub mod args;
mod cmd;
mod config;
mod files;

use std::ffi::OsString;

use clap::Parser;

use crate::args::{Cli, Command, Common};
use crate::config::FileConfig;
pub use crate::files::NoInput;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NO_INPUT: i32 = 2;

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Outputs were written but there was nothing to process.
    Empty,
}

/// Settings shared by every command after merging flags over the config file.
pub struct Session {
    pub seed: u64,
    pub strict: bool,
    pub jobs: usize,
    pub config: FileConfig,
    pub warnings: Vec<String>,
}

impl Session {
    fn new(common: &Common) -> anyhow::Result<Self> {
        let config = FileConfig::load(common.config.as_deref())?;
        Ok(Self {
            seed: common.seed.or(config.seed).unwrap_or(0),
            strict: common.strict || config.strict.unwrap_or(false),
            jobs: common.jobs.or(config.jobs).unwrap_or(0),
            config,
            warnings: Vec::new(),
        })
    }

    pub fn input(&self, common: &Common) -> Option<std::path::PathBuf> {
        common.input.clone().or_else(|| self.config.input.clone())
    }

    pub fn output(&self, common: &Common) -> Option<std::path::PathBuf> {
        common.output.clone().or_else(|| self.config.output.clone())
    }

    pub fn parallel(&self) -> bool {
        self.jobs != 1
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        self.warnings.push(message.into());
    }
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<NoInput>().is_some() {
                EXIT_NO_INPUT
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn execute(command: Command) -> anyhow::Result<i32> {
    let common = match &command {
        Command::Partition(a) => &a.common,
        Command::Score(a) => &a.common,
        Command::Mix(a) => &a.common,
        Command::Perturb(a) => &a.common,
        Command::Stats(a) => &a.common,
    };
    let mut session = Session::new(common)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(session.jobs).build()?;
    let status = pool.install(|| match &command {
        Command::Partition(a) => cmd::partition::run(a, &mut session),
        Command::Score(a) => cmd::score::run(a, &mut session),
        Command::Mix(a) => cmd::mix::run(a, &mut session),
        Command::Perturb(a) => cmd::perturb::run(a, &mut session),
        Command::Stats(a) => cmd::stats::run(a, &mut session),
    })?;
    for w in &session.warnings {
        eprintln!("warning: {w}");
    }
    Ok(match status {
        Status::Empty => EXIT_NO_INPUT,
        Status::Done if session.strict && !session.warnings.is_empty() => {
            eprintln!("error: {} warning(s) under --strict", session.warnings.len());
            EXIT_INVALID
        }
        Status::Done => EXIT_OK,
    })
}
