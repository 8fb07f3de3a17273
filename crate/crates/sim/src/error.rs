use std::io;

use kinetic_welfare_core::Error as ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0} of {1} sweep points failed")]
    PointsFailed(usize, usize),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    NonConvergence = 2,
    Io = 3,
}

impl SimError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            SimError::Usage(_) | SimError::Pool(_) => ExitCode::Usage,
            SimError::Model(ModelError::NonConvergence { .. } | ModelError::StepSize { .. })
            | SimError::PointsFailed(..) => ExitCode::NonConvergence,
            SimError::Model(_) => ExitCode::Usage,
            SimError::Io(_) | SimError::Csv(_) | SimError::Json(_) => ExitCode::Io,
        }
    }
}
