//! Error types shared across the crate.

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A static problem definition violates its invariants.
    #[error("invalid problem specification: {0}")]
    Spec(String),

    /// A state has a nonpositive warping factor somewhere; it must be
    /// flagged rather than used.
    #[error("singular state: {0}")]
    SingularState(String),

    /// A derivative stencil was requested too close to the grid edge.
    #[error("stencil at index {index} needs {margin} interior cells (grid length {len})")]
    BoundaryStencil {
        index: usize,
        margin: usize,
        len: usize,
    },

    /// NaN or infinity showed up where a finite number was required.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// An argument is outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A control function fails the class membership required here.
    #[error("control function out of class: {0}")]
    OutOfClass(String),

    /// Frames passed to a multi-frame operation do not line up.
    #[error("frame alignment error: {0}")]
    Alignment(String),

    /// A requested construction cannot be realized on this grid/domain.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Not enough data to reach a verdict.
    #[error("inconclusive: {0}")]
    Inconclusive(String),

    /// Time stepping failed (repeated rejections, dt underflow).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Bad configuration, with the offending field path.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: &str, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
