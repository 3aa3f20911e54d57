use thiserror::Error;

/// Errors raised by the mechanism math, the oracles and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error in {op}: {reason}")]
    Domain {
        op: &'static str,
        reason: &'static str,
    },

    #[error("penalty scalar is singular for agent {agent}: the other agents contribute no data (n >= 2 active contributors are required)")]
    Singular { agent: usize },

    #[error(
        "free-rider penalty is disabled (lambda = 0); evaluate the plain federated loss instead"
    )]
    DegeneratePenalty,

    #[error("agent index {index} out of range for {len} agents")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("objective is not finite at {point:?}")]
    NonFinite { point: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no agent contributes data; training has nothing to aggregate")]
    NoContributors,

    #[error("step-size condition violated: gamma * L = {gamma_l} (must be < 2)")]
    StepSize { gamma_l: f64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and > 0",
        })
    }
}

pub(crate) fn nonnegative(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and >= 0",
        })
    }
}
