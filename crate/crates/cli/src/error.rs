use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] disg_core::Error),
    #[error("value iteration did not converge: {0}")]
    NotConverged(String),
    #[error("plots need a two-state grid, got {0} states")]
    UnsupportedDimension(usize),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::NotConverged(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "Config",
            CliError::NotConverged(_) => "NotConverged",
            CliError::UnsupportedDimension(_) => "UnsupportedDimension",
            CliError::Io { .. } => "Io",
            CliError::Core(e) => match e {
                disg_core::Error::NonStochasticRow { .. } => "NonStochasticRow",
                disg_core::Error::NegativeEntry { .. } => "NegativeEntry",
                disg_core::Error::DimensionMismatch(_) => "DimensionMismatch",
                disg_core::Error::InvalidBelief(_) => "InvalidBelief",
                disg_core::Error::ZeroLikelihood => "ZeroLikelihood",
                disg_core::Error::SignalActionMismatch { .. } => "SignalActionMismatch",
                disg_core::Error::GridMismatch(_) => "GridMismatch",
                disg_core::Error::ResolutionTooLarge { .. } => "ResolutionTooLarge",
                disg_core::Error::InvalidParams(_) => "InvalidParams",
                disg_core::Error::OracleViolation { .. } => "OracleViolation",
                disg_core::Error::EnumerationTooLarge { .. } => "EnumerationTooLarge",
                disg_core::Error::Parse(_) => "Parse",
            },
        }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}
