use thiserror::Error;

/// Failures raised by the numerical pipeline and the command-line layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no convergence: {0}")]
    ConvergenceFailure(String),

    #[error("near-degenerate eigenvalues {first} and {second} (gap {gap:.3e} below {threshold:.3e})")]
    DegeneracyDetected {
        first: f64,
        second: f64,
        gap: f64,
        threshold: f64,
    },

    #[error("requested {requested} bound states but only {found} were found")]
    InsufficientBoundStates { requested: usize, found: usize },

    #[error("right-hand side overlaps the deflated eigenvector ({overlap:.3e})")]
    NotOrthogonal { overlap: f64 },

    #[error("shift {re}{im:+}i lies within {distance:.3e} of the spectrum")]
    NearSpectrum { re: f64, im: f64, distance: f64 },

    #[error("lost track of level {level} at b = {b}: overlap {overlap:.3}")]
    LevelTrackingLost { level: usize, b: f64, overlap: f64 },

    #[error("dimension {0} exceeds the dense limit")]
    DimensionTooLarge(usize),

    #[error("highest included level still contributes {0:.3e}")]
    TailTooLarge(f64),

    #[error("could not bracket the chemical potential")]
    BracketFailure,

    #[error("not insulating: {0}")]
    NotInsulating(String),

    #[error("remainders below the noise floor: {0}")]
    NoiseFloor(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::ConvergenceFailure(_)
            | Error::LevelTrackingLost { .. }
            | Error::NearSpectrum { .. }
            | Error::BracketFailure
            | Error::TailTooLarge(_)
            | Error::NotOrthogonal { .. } => 3,
            Error::DegeneracyDetected { .. }
            | Error::InsufficientBoundStates { .. }
            | Error::NotInsulating(_)
            | Error::NoiseFloor(_) => 4,
            Error::DimensionTooLarge(_) => 2,
            Error::Context { source, .. } => source.exit_code(),
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
        }
    }

    /// Wraps the error with a description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error beneath any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
