use rhm::error::RhmError;

/// Failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad config, missing field, unreadable input. Exit 2.
    Config(String),
    /// A model or artifact constraint is violated. Exit 3.
    Constraint(String),
    /// A numeric procedure could not produce a result. Exit 4.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Constraint(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Constraint(m) => write!(f, "constraint violation: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<RhmError> for CliError {
    fn from(e: RhmError) -> Self {
        let msg = e.to_string();
        match e {
            RhmError::Parameter(_)
            | RhmError::Index(_)
            | RhmError::Validation(_)
            | RhmError::NoAlternativeRule
            | RhmError::Theory(_)
            | RhmError::ImpossibleContext
            | RhmError::Size(_) => CliError::Constraint(msg),
            RhmError::Window(_) | RhmError::Degenerate(_) => CliError::Numeric(msg),
            RhmError::Empty(_) | RhmError::Format(_) | RhmError::Io(_) => CliError::Config(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("i/o: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
