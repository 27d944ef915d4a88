use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("polynomial degree {0} is not supported (0..=4)")]
    UnsupportedDegree(usize),
    #[error("dimension {0} is not supported (1 or 2)")]
    UnsupportedDimension(usize),
}

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("cell count must be positive")]
    InvalidCellCount,
    #[error("degenerate domain: {0}")]
    DegenerateDomain(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-conforming mesh: edge ({0}, {1}) is shared by {2} elements")]
    NonConforming(usize, usize, usize),
    #[error("element {0} has zero area")]
    Inverted(usize),
    #[error("boundary facet ({0}, {1}) has no tag")]
    UntaggedBoundary(usize, usize),
    #[error("boundary tag line ({0}, {1}) does not match a boundary facet")]
    UnknownBoundaryFacet(usize, usize),
    #[error("periodic pair {0}: {1}")]
    PeriodicMismatch(u32, String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("negative water height {0}")]
    NegativeHeight(f64),
    #[error("characteristic decomposition needs positive height, got {0}")]
    NonPositiveHeight(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("fields do not share a discretization: {0}")]
    Mismatch(String),
    #[error("height-weighted mass matrix of element {element} is not positive definite")]
    NotSpd { element: usize },
    #[error("negative cell average {value:e} of water height in element {element}")]
    NegativeAverage { element: usize, value: f64 },
    #[error("non-finite value in element {element}")]
    NonFinite { element: usize },
    #[error("step at t = {t} failed after {retries} halvings (last dt = {dt:e}): {reason}")]
    RetryExhausted {
        t: f64,
        dt: f64,
        retries: usize,
        reason: String,
    },
    #[error("invalid step control: {0}")]
    InvalidControl(String),
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("resolutions are not nested: {0}")]
    NotNested(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
