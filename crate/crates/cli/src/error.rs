use std::io;
use std::path::PathBuf;

use tcsteer_core::attack::AttackError;
use tcsteer_core::fields::FieldError;
use tcsteer_core::geo::GeoError;
use tcsteer_core::labels::LabelError;
use tcsteer_core::metrics::MetricsError;
use tcsteer_core::stealth::StealthError;
use tcsteer_core::surrogate::SurrogateError;
use tcsteer_core::synth::SynthError;
use tcsteer_core::targetgen::TargetError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },
    #[error("{0}")]
    Numeric(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// 2 usage, 3 I/O or malformed file, 4 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Usage(_) => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! numeric {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Numeric(e.to_string())
            }
        }
    )*};
}

numeric!(FieldError, GeoError, LabelError, MetricsError, StealthError, SynthError, TargetError);

impl From<AttackError> for Error {
    fn from(e: AttackError) -> Self {
        match e {
            AttackError::Config(_) | AttackError::UnknownMethod => Error::Usage(e.to_string()),
            AttackError::Surrogate(s) => s.into(),
            e => Error::Numeric(e.to_string()),
        }
    }
}

impl From<SurrogateError> for Error {
    fn from(e: SurrogateError) -> Self {
        match e {
            SurrogateError::Config(_) => Error::Usage(e.to_string()),
            e => Error::Numeric(e.to_string()),
        }
    }
}
