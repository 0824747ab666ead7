use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use photonstat::io::FormatError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Io,
    Config,
    Data,
    NoConvergence,
    CheckFailed,
}

impl Kind {
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::Io => 1,
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::NoConvergence => 4,
            Kind::CheckFailed => 5,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }
    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Kind::Config, message)
    }
    pub fn data(message: impl Into<String>) -> Self {
        Self::new(Kind::Data, message)
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(Kind::Io, format!("{}: {e}", path.display()))
    }

    /// Read errors: I/O problems stay I/O, anything about the content is data.
    pub fn format(path: &Path, e: FormatError) -> Self {
        let kind = if matches!(e, FormatError::Io(_)) { Kind::Io } else { Kind::Data };
        Self::new(kind, format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.exit_code())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type Result<T> = std::result::Result<T, Failure>;
