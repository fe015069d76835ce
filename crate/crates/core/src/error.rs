use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("integration blow-up: compartment {index} ({name}) became {value}")]
    IntegrationBlowup {
        index: usize,
        name: &'static str,
        value: f64,
    },

    #[error("no equilibrium in bracket: {0}")]
    NoEquilibrium(String),

    #[error("invalid meal distribution: {0}")]
    InvalidMealSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty sample vector")]
    EmptySamples,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite training loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("sign test undefined: every paired difference is zero")]
    UndefinedTest,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("seed mismatch: {0}")]
    SeedMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// Wraps the error with a location such as `episode 3, step 120`.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
