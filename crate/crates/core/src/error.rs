use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rate table has no entry for (k={k}, l={l}); table is {rows}x{cols}")]
    TableOutOfRange {
        k: usize,
        l: usize,
        rows: usize,
        cols: usize,
    },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("lattice needs at least 2 sites, got L={0}")]
    InvalidLattice(u64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("density must be positive, got {0}")]
    InvalidDensity(f64),

    #[error("moment of order {order} is not supported (max 6) or overflowed")]
    MomentOverflow { order: u32 },

    #[error("absorbing state reached: total jump rate is zero")]
    Absorbing,

    #[error("value out of range: {0}")]
    Range(String),

    #[error("step size underflow at t={t} (h={h:e}, K={cutoff}); system too stiff for the explicit integrator")]
    Stiffness { t: f64, h: f64, cutoff: usize },

    #[error("thinning envelope violated at t={t}: rate {rate} exceeds bound {bound}")]
    EnvelopeViolated { t: f64, rate: f64, bound: f64 },

    #[error("exact chain would have {states} states, above the guard of {limit}")]
    StateGuard { states: usize, limit: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dominating process overflowed at t={0}")]
    Overflow(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("path {index} (seed {seed:#018x}) failed: {source}")]
    Path {
        index: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    /// Process exit code: 2 config, 3 numerical failure, 4 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidKernel(_)
            | Error::InvalidLattice(_)
            | Error::InvalidParameter(_)
            | Error::InvalidDensity(_)
            | Error::TableOutOfRange { .. }
            | Error::StateGuard { .. }
            | Error::Parse { .. }
            | Error::Io { .. } => 2,
            Error::Invariant(_) => 4,
            Error::Path { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
