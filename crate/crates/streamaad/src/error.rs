use std::io;
use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Process exit codes, one per failure class.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const FORMAT: i32 = 4;
    pub const NUMERICAL: i32 = 5;
    pub const CONSISTENCY: i32 = 6;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: bad magic {found:?}, expected {expected:?}", path.display())]
    BadMagic {
        path: PathBuf,
        expected: &'static str,
        found: String,
    },

    #[error("{}: unsupported format version {found}, this build reads {supported}", path.display())]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    #[error("{}: truncated, expected {expected} bytes but found {actual}", path.display())]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("{}: malformed {what}: {msg}", path.display())]
    Malformed {
        path: PathBuf,
        what: &'static str,
        msg: String,
    },

    #[error("{}: {msg}", path.display())]
    Consistency { path: PathBuf, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] streamaad_core::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn malformed(path: impl AsRef<Path>, what: &'static str, msg: impl ToString) -> Self {
        Error::Malformed {
            path: path.as_ref().to_path_buf(),
            what,
            msg: msg.to_string(),
        }
    }

    pub fn consistency(path: impl AsRef<Path>, msg: impl Into<String>) -> Self {
        Error::Consistency {
            path: path.as_ref().to_path_buf(),
            msg: msg.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        use streamaad_core::Error as C;
        match self {
            Error::Io { .. } => exit::IO,
            Error::BadMagic { .. }
            | Error::UnsupportedVersion { .. }
            | Error::Truncated { .. }
            | Error::Malformed { .. } => exit::FORMAT,
            Error::Consistency { .. } => exit::CONSISTENCY,
            Error::Config(_) => exit::USAGE,
            Error::Core(C::NonFinite(_)) => exit::NUMERICAL,
            Error::Core(C::InvalidArgument(_)) => exit::USAGE,
            Error::Core(C::ShapeMismatch { .. } | C::Consistency(_)) => exit::CONSISTENCY,
        }
    }
}
