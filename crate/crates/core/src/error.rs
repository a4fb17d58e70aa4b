use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RhmError {
    /// A grammar parameter violates one of the model constraints.
    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("index out of range: {0}")]
    Index(String),

    /// The observed evidence has zero probability under the grammar.
    #[error("impossible context: the observed tokens cannot be generated by this grammar")]
    ImpossibleContext,

    #[error("size limit exceeded: {0}")]
    Size(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("no alternative rule: symbol has a single production rule (m = 1)")]
    NoAlternativeRule,

    #[error("empty input: {0}")]
    Empty(String),

    /// The theory formulas only apply with f < 1.
    #[error("theory inapplicable: {0}")]
    Theory(String),

    #[error("fit window error: {0}")]
    Window(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for RhmError {
    fn from(e: std::io::Error) -> Self {
        RhmError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for RhmError {
    fn from(e: serde_json::Error) -> Self {
        RhmError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, RhmError>;
