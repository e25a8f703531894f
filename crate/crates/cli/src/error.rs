use std::fmt;

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config file (exit 2).
    Usage(String),
    /// A parameter violates a precondition (exit 3).
    Precondition(String),
    /// The critical search could not certify a bracket (exit 4).
    Bracket(String),
    /// Reading or writing artifacts failed (exit 5).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Precondition(_) => 3,
            CliError::Bracket(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Precondition(m) => write!(f, "precondition violated: {m}"),
            CliError::Bracket(m) => write!(f, "bracketing failed: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<lrperc::Error> for CliError {
    fn from(e: lrperc::Error) -> Self {
        match e {
            lrperc::Error::BracketFailure(m) => CliError::Bracket(m),
            lrperc::Error::Io(e) => CliError::Io(e.to_string()),
            lrperc::Error::Parse(m) => CliError::Io(format!("cannot parse input: {m}")),
            other => CliError::Precondition(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
