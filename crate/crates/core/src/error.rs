use thiserror::Error;

use crate::deform::TraceRecord;
use crate::mesh::TriangleMesh;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid interpolation mode: {0}")]
    InvalidMode(String),

    #[error("mask is empty")]
    EmptyMask,

    #[error("label {0} has no intensity prior")]
    MissingLabel(u16),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("topology repair failed: Euler characteristic {chi} after {rounds} rounds")]
    TopologyRepairFailed { chi: i64, rounds: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("point outside the distance field domain: {0}")]
    OutOfDomain(String),

    #[error("surface fit stalled at minimum step {step} with {intersections} self-intersections")]
    FitStalled {
        step: f64,
        intersections: usize,
        partial: Box<TriangleMesh>,
        trace: Vec<TraceRecord>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::InvalidMode(_) => "invalid_mode",
            Error::EmptyMask => "empty_mask",
            Error::MissingLabel(_) => "missing_label",
            Error::GeometryMismatch(_) => "geometry_mismatch",
            Error::Topology(_) => "topology",
            Error::TopologyRepairFailed { .. } => "topology_repair_failed",
            Error::DegenerateGeometry(_) => "degenerate_geometry",
            Error::OutOfDomain(_) => "out_of_domain",
            Error::FitStalled { .. } => "fit_stalled",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

impl Error {
    /// Process exit status for command-line use: 2 invalid input, 3 topology
    /// repair failure, 4 stalled fit, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::TopologyRepairFailed { .. } | Error::Topology(_) => 3,
            Error::FitStalled { .. } => 4,
            Error::Io(_) => 5,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
