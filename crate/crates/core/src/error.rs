use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Maxwellian mass outside the velocity box is {fraction:.3e} of the total (limit 1e-8); increase v_max")]
    TailTruncation { fraction: f64 },

    #[error("Newton iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },

    #[error("singular induction system: {0}")]
    SingularSystem(String),

    #[error("velocity remap lost {fraction:.3e} of the mass in one call (limit 1e-6); increase v_max")]
    ExcessiveTruncation { fraction: f64 },

    #[error("moment correction failed at x node {node}: {reason}")]
    MomentCorrection { node: usize, reason: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
