use std::fmt;

/// A failed command, split by exit code: bad input (2) or a failure while
/// computing (3).
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Runtime(e) => write!(f, "runtime error: {e:#}"),
        }
    }
}

impl std::error::Error for Failure {}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// Tags errors with an exit code class.
pub trait Classify<T> {
    fn config(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn config(self) -> CliResult<T> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

pub fn config_error(msg: impl fmt::Display) -> Failure {
    Failure::Config(anyhow::anyhow!("{msg}"))
}
