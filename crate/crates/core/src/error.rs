use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("non-manifold edge ({0}, {1}): shared by {2} triangles")]
    NonManifoldEdge(usize, usize, usize),

    #[error("open boundary at edge ({0}, {1})")]
    OpenBoundary(usize, usize),

    #[error("orientation conflict at triangle {0}")]
    OrientationConflict(usize),

    #[error("non-manifold vertex {0}: link is not a single cycle")]
    NonManifoldVertex(usize),

    #[error("triangle {0}: triangle inequality violated")]
    DegenerateTriangle(usize),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("density violates constraints: {0}")]
    InvalidDensity(String),

    #[error(
        "indefinite mass; reduce negative density or use floor=0 ({negative} negative pivots)"
    )]
    IndefiniteMass { negative: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("eigensolver did not converge after {iterations} restarts (max residual {max_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        max_residual: f64,
        residuals: Vec<f64>,
    },

    #[error("projection onto the density box did not converge (mass residual {mass_residual:.3e}, box violation {box_violation:.3e})")]
    Projection {
        mass_residual: f64,
        box_violation: f64,
    },

    #[error("map degenerate: w vanishes on {fraction:.2}% of vertices")]
    DegenerateMap { fraction: f64 },

    #[error("measure nearly atomic; no interior center")]
    AtomicMeasure,

    #[error("inconsistent inputs: {0}")]
    Inconsistent(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's input rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::NonManifoldEdge(..)
                | Error::OpenBoundary(..)
                | Error::OrientationConflict(_)
                | Error::NonManifoldVertex(_)
                | Error::DegenerateTriangle(_)
                | Error::InvalidMesh(_)
                | Error::InvalidArgument(_)
                | Error::InvalidDensity(_)
                | Error::Inconsistent(_)
                | Error::Config(_)
        )
    }
}
