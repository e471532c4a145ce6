//! CLI error type with the exit-code contract: 2 for config errors, 3 for
//! data errors, 4 for model errors.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(String),
}

/// Core errors map onto exit categories by variant: parameter problems come
/// from configuration, data problems from inputs, everything else from the
/// model.
impl From<austeer_core::Error> for CliError {
    fn from(e: austeer_core::Error) -> Self {
        match &e {
            austeer_core::Error::Param(_) => CliError::Config(e.to_string()),
            austeer_core::Error::Data(_) => CliError::Data(e.to_string()),
            _ => CliError::Model(e.to_string()),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Model(_) => 4,
        }
    }

    pub fn config(msg: impl std::fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn data(msg: impl std::fmt::Display) -> Self {
        CliError::Data(msg.to_string())
    }

    pub fn model(msg: impl std::fmt::Display) -> Self {
        CliError::Model(msg.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
