use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}{}", context_suffix(.context))]
    DimMismatch {
        expected: usize,
        got: usize,
        context: String,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("csv parse failure in {path}: {}", .diagnostics.join("; "))]
    CsvRows {
        path: String,
        /// Row-indexed messages, capped at the first twenty offenders.
        diagnostics: Vec<String>,
    },

    #[error("detector produced an empty {side} partition; score distribution:\n{histogram}")]
    EmptySplit { side: String, histogram: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub fn dim(expected: usize, got: usize, context: impl Into<String>) -> Self {
        Error::DimMismatch {
            expected,
            got,
            context: context.into(),
        }
    }

    pub fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
