use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("scenario validation failed: {0}")]
    Validation(String),

    /// An estimator step failed; the location says where.
    #[error("numerical failure at run {run}, frame {frame}, sensor {sensor:?}, target {target:?}: {source}")]
    Numerical {
        run: usize,
        frame: usize,
        sensor: Option<usize>,
        target: Option<usize>,
        #[source]
        source: trackreg::Error,
    },

    #[error("non-finite {metric} at frame {frame}, sensor {sensor}")]
    NonFinite {
        metric: String,
        frame: usize,
        sensor: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Report(String),
}

impl HarnessError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Validation(_) => 1,
            HarnessError::Numerical { .. } | HarnessError::NonFinite { .. } => 2,
            HarnessError::Io { .. } | HarnessError::Report(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Attaches a location to core errors.
pub(crate) trait Locate<T> {
    fn at(
        self,
        run: usize,
        frame: usize,
        sensor: Option<usize>,
        target: Option<usize>,
    ) -> Result<T>;
}

impl<T> Locate<T> for trackreg::Result<T> {
    fn at(
        self,
        run: usize,
        frame: usize,
        sensor: Option<usize>,
        target: Option<usize>,
    ) -> Result<T> {
        self.map_err(|source| HarnessError::Numerical {
            run,
            frame,
            sensor,
            target,
            source,
        })
    }
}
