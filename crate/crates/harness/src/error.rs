use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("cannot parse config {path}: {reason}")]
    ConfigParse { path: PathBuf, reason: String },
    #[error("unknown scenario `{0}` (expected one of: {names})", names = crate::scenarios::ScenarioName::ALL_NAMES.join(", "))]
    UnknownScenario(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] qpiston::Error),
}

impl HarnessError {
    pub fn config(key: &str, reason: impl Into<String>) -> Self {
        Self::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            Self::Config { .. } | Self::UnknownScenario(_) => "configuration",
            Self::ConfigParse { .. } => "parse",
            Self::Io { .. } => "io",
            Self::Core(e) => e.category(),
        }
    }

    /// Process exit status for this error's category.
    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "configuration" => 2,
            "parse" => 3,
            "validation" => 4,
            "integration" => 5,
            "io" => 6,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
