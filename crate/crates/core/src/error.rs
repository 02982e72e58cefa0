use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("predicted size {predicted} exceeds capacity {cap}")]
    Capacity { predicted: u128, cap: u128 },

    #[error("decode failed: {0}")]
    Decode(String),

    #[error("no decodable bitstring within a budget of {budget} bits")]
    NoDecodableCandidate { budget: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Error {
    Error::Parameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn decode_err(reason: impl Into<String>) -> Error {
    Error::Decode(reason.into())
}
