//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs with inconsistent shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Structurally well-formed input with invalid content (NaN, negative
    /// weights, matrices failing a definiteness requirement, ...).
    #[error("invalid input: {0}")]
    Input(String),
    /// A requested configuration the artifact cannot honor.
    #[error("invalid configuration: {0}")]
    Config(String),
    /// An operation invoked in a state it does not support.
    #[error("invalid state: {0}")]
    State(String),
    /// Numerical breakdown that is not attributable to the caller.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
