use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents. `line` is the 1-based physical line in the
    /// file, counting the header.
    #[error("{path}: {msg} at line {line}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// Invalid argument or inconsistent inputs (dimension mismatches,
    /// out-of-range parameters, malformed in-memory data).
    #[error("{0}")]
    Invalid(String),

    /// The iterative eigensolver ran out of its matrix-vector product budget
    /// before every requested pair met the residual tolerance.
    #[error(
        "eigensolver did not converge: {converged} of {requested} pairs at tolerance {tol:e} \
         after {matvecs} matrix-vector products (worst residual {worst:e})"
    )]
    NonConvergence {
        converged: usize,
        requested: usize,
        tol: f64,
        matvecs: usize,
        worst: f64,
    },
}

impl Error {
    /// Wrap an IO error with the path it concerns.
    pub fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &std::path::Path, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Error {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
