use std::path::PathBuf;

/// Faults that stop the command line. Physics failures at individual sweep
/// points are data and never end up here.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("writing output: {0}")]
    Output(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration faults, 3 for I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Output(_) => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot encode parameters: {0}")]
    Encode(#[from] toml::ser::Error),
    #[error("{0}")]
    Model(#[from] magnomech_core::Error),
    #[error("parameter path `{0}` does not resolve")]
    UnknownPath(String),
    #[error("axis `{path}`: {reason}")]
    Axis { path: String, reason: String },
    #[error("unknown preset `{name}`; available: {}", available.join(", "))]
    UnknownPreset {
        name: String,
        available: Vec<&'static str>,
    },
    #[error("{0}")]
    Invalid(String),
}
