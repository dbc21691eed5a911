use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenregError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid corruption recipe: {0}")]
    Recipe(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("backtracking for the {block} block gave up after {steps} steps (L = {lipschitz:e})")]
    Backtracking {
        block: &'static str,
        steps: usize,
        lipschitz: f64,
    },

    #[error("non-finite objective at iteration {0}")]
    NonFinite(usize),

    #[error("malformed spectrum file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, GenregError>;
