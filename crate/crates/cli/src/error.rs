use std::path::PathBuf;

use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),

    #[error("numerical failure after {rows_written} rows: {source}")]
    Numerical {
        #[source]
        source: sdeproj::Error,
        rows_written: usize,
    },

    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write csv {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Parse { .. } | Self::Invalid(_) => EXIT_CONFIG,
            Self::Numerical { .. } => EXIT_NUMERICAL,
            Self::Io { .. } | Self::Csv { .. } => EXIT_IO,
        }
    }

    /// Classify a library error raised while an experiment runs.
    pub fn from_library(source: sdeproj::Error, rows_written: usize) -> Self {
        match source {
            sdeproj::Error::InvalidArgument(msg) => Self::Invalid(vec![msg]),
            sdeproj::Error::Dimension { .. } => Self::Invalid(vec![source.to_string()]),
            _ => Self::Numerical { source, rows_written },
        }
    }
}
