use thiserror::Error;

/// Errors reported by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter or argument is outside its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A scenario configuration cannot be run as given.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Observer gain tuning requires a nonzero disturbance input vector.
    #[error("disturbance input vector is zero; observer gain is undefined")]
    ZeroDisturbanceInput,

    /// Metrics were requested for a trace with no samples.
    #[error("trace contains no samples")]
    EmptyTrace,

    /// A sweep referenced a parameter path the configuration does not have.
    #[error("unknown sweep parameter `{0}`")]
    UnknownSweepParameter(String),
}
