//! Exit-code-bearing error type for the command-line front end.

use nhje_core::error::NhjeError;
use std::fmt;

/// Anything that can abort a run, tagged with the process exit code the
/// shell contract assigns to it: 2 for configuration problems, 3 for a
/// numerical failure inside the pipeline, 1 for plain I/O trouble.
#[derive(Debug)]
pub enum CliError {
    /// Unparseable or invalid configuration; the message carries the file,
    /// the line and column, or the field that failed.
    Config(String),
    /// A core computation failed; `stage` names the pipeline step so the
    /// operator knows where to look.
    Numerical {
        stage: &'static str,
        source: NhjeError,
    },
    /// Filesystem trouble while reading configs or writing artifacts.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numerical { stage, source } => {
                write!(f, "numerical failure in {stage}: {source}")
            }
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Adapter mapping a core error into [`CliError::Numerical`] at `stage`.
pub fn at_stage(stage: &'static str) -> impl Fn(NhjeError) -> CliError {
    move |source| CliError::Numerical { stage, source }
}

pub type Result<T> = std::result::Result<T, CliError>;
