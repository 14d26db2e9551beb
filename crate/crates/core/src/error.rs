use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Shapes, dimensions or registry entries that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// The object exists but lacks an optional capability (orbit sampler, minimal statistic, ...).
    #[error("capability error: {0}")]
    Capability(String),

    #[error("unknown id `{id}`; registered: {}", known.join(", "))]
    Lookup { id: String, known: Vec<String> },

    /// Successive quadrature refinements disagreed beyond tolerance.
    #[error("quadrature did not converge: coarse={coarse:e}, fine={fine:e} (nodes per dim {nodes})")]
    Quadrature { coarse: f64, fine: f64, nodes: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A shard-scoped preprocessor tried to read data it does not own.
    #[error("contract violation: preprocessor for shard {owner} attempted to read shard {requested}")]
    ContractViolation { owner: usize, requested: usize },

    #[error("internal assertion failed: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
