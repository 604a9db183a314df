use thiserror::Error;

/// Errors raised anywhere in the simulation, estimation and planning chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("undefined power ratio: {0}")]
    UndefinedRatio(String),

    #[error("frequency-offset estimation failed: {0}")]
    EstimationFailure(String),

    #[error("carrier tracking failed: {0}")]
    TrackingFailure(String),

    #[error("calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("unphysical state: {0}")]
    Unphysical(String),

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Attach a pipeline stage label.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage labels peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at(stage))
    }
}
