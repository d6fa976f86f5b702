use std::fmt;
use std::process::ExitCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Analysis,
}

impl Kind {
    pub fn exit_code(self) -> ExitCode {
        ExitCode::from(match self {
            Kind::Config => 1,
            Kind::Data => 2,
            Kind::Analysis => 3,
        })
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn config(msg: impl fmt::Display) -> Self {
        Self {
            kind: Kind::Config,
            error: anyhow::anyhow!("{msg}"),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self.kind {
            Kind::Config => "configuration error",
            Kind::Data => "data error",
            Kind::Analysis => "analysis error",
        };
        write!(f, "{label}: {:#}", self.error)
    }
}

/// Tags a result's error with its exit class and a context message.
pub trait Classify<T> {
    fn or_fail(self, kind: Kind, context: impl FnOnce() -> String) -> Result<T, Failure>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: Into<anyhow::Error>,
{
    fn or_fail(self, kind: Kind, context: impl FnOnce() -> String) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            kind,
            error: e.into().context(context()),
        })
    }
}
