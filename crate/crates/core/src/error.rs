use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("range error: {0}")]
    Range(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("gain design failed: {reason} (residual {residual:.3e})")]
    Design { reason: String, residual: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parameters outside the admissible set: {}", .0.join("; "))]
    SetMembership(Vec<String>),

    #[error("schedule violates sampling assumption: {0}")]
    Schedule(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("trace overflow: more than {0} events")]
    TraceOverflow(usize),
}
