use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "cannot parse group spec {input:?}: expected factors joined by 'x', each <letter><rank> (e.g. A1, A2, A1xA1, G2)"
    )]
    SpecParse { input: String },

    #[error("unsupported group {spec}: {reason}")]
    UnsupportedGroup { spec: String, reason: String },

    #[error("capacity exceeded: {what} would exceed the cap of {cap}")]
    Capacity { what: String, cap: usize },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("normalization corruption: {0}")]
    NormalizationCorrupt(String),

    #[error("singular evaluation: {0}")]
    SingularEvaluation(String),

    #[error("integration did not converge: {0}")]
    Integration(String),

    #[error("lattice sum truncated too early: tail bound {tail:.3e} exceeds tolerance {tolerance:.3e}; a cut radius of {required_cut:.4} is required")]
    Truncation {
        tail: f64,
        tolerance: f64,
        required_cut: f64,
    },

    #[error("under-resolved quadrature: {0}")]
    Resolution(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("certification failed: {0}")]
    Certification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Certification(_) => 2,
            Error::SpecParse { .. }
            | Error::UnsupportedGroup { .. }
            | Error::Config(_)
            | Error::Hypothesis(_)
            | Error::Mode(_)
            | Error::Empty(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
            _ => 4,
        }
    }
}
