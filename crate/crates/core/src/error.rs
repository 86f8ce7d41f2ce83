use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("user distance {0} m does not exceed the 1 m reference distance")]
    ReferenceDistance(f64),

    #[error("rank-deficient Khatri-Rao factor in mode-{mode} update (pose {pose}): {detail}")]
    RankDeficient { mode: usize, pose: usize, detail: String },

    #[error("user is unobservable: {0}")]
    Unobservable(String),

    #[error("MSE of user {user} is {mse:e}; weight update needs e > 0")]
    DegenerateMse { user: usize, mse: f64 },

    #[error("precoder power bisection failed: {0}")]
    Bisection(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
