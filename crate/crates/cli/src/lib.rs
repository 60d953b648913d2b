//! The `llmie` command-line tool and HTTP server.

pub mod args;
pub mod commands;
pub mod engine_opts;
pub mod manifest;
pub mod server;

use std::ffi::OsString;
use std::fmt;
use std::io::{BufRead, Write};

use clap::Parser;

pub use args::Cli;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
/// Some documents failed; the others were written.
pub const EXIT_PARTIAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_UNAVAILABLE: i32 = 69;

/// An error carrying the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        Self { code, error: error.into() }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(EXIT_USAGE, anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub trait WithCode<T> {
    fn code(self, code: i32) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: i32) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(code, e))
    }
}

pub type CmdResult = Result<i32, Failure>;

/// Parses `argv` and runs the command. Output goes to the given streams so
/// that tests can drive the tool in-process.
pub fn run_with<I, T>(argv: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let result = match cli.command {
        args::Command::Extract(a) => commands::extract::run(&a, stdout, stderr),
        args::Command::Eval(a) => commands::eval::run(&a, stdout, stderr),
        args::Command::Chat(a) => commands::chat::run(&a, stdin, stdout),
        args::Command::Render(a) => commands::render::run(&a),
        args::Command::Serve(a) => commands::serve(&a, stderr),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            let _ = writeln!(stderr, "error: {failure}");
            failure.code
        }
    }
}
