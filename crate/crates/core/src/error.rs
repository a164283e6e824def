use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed parameter vector: {0}")]
    MalformedParams(String),

    #[error("degenerate parameters: codeword {symbol} of user {user} has zero norm")]
    DegenerateParams { user: usize, symbol: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("unknown template `{name}`; available templates: {available}")]
    UnknownTemplate { name: String, available: String },

    #[error("unknown fixture `{name}`; available fixtures: {available}")]
    UnknownFixture { name: String, available: String },

    #[error(
        "exhaustive MAP detection needs {hypotheses} hypotheses (limit {limit}); use MPA detection instead"
    )]
    MapTooLarge { hypotheses: u128, limit: u128 },

    #[error("fixture `{id}` failed structural validation: {details}")]
    InvalidFixture { id: String, details: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
