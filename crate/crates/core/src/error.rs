use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("expected exactly one mask token {mask:?}, found {found} in {text:?}")]
    MaskCount {
        text: String,
        mask: String,
        found: usize,
    },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unknown model {0:?}")]
    UnknownModel(String),

    #[error("cache miss: {0}")]
    CacheMiss(String),

    #[error("conflicting payloads recorded for digest {0}")]
    ConflictingDigest(String),

    #[error("degenerate sample: all paired differences are zero")]
    DegenerateSample,

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("prompt {prompt_id}: {source}")]
    Prompt {
        prompt_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "batch aborted: {} prompt(s) completed, {} failed ({}): {source}",
        completed.len(),
        failed.len(),
        failed.join(", ")
    )]
    BatchAborted {
        completed: Vec<String>,
        failed: Vec<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("corpus version mismatch in {context}: expected {expected:?}, found {found:?}")]
    VersionMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("missing artifact {}: {what}", path.display())]
    MissingArtifact { path: PathBuf, what: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub(crate) fn for_prompt(self, prompt_id: &str) -> Self {
        Error::Prompt {
            prompt_id: prompt_id.to_string(),
            source: Box::new(self),
        }
    }

    /// True for failures that originate in a probe backend (transport, wire
    /// protocol, replay cache) rather than in local inputs.
    pub fn is_backend(&self) -> bool {
        match self {
            Error::MaskCount { .. }
            | Error::Transport { .. }
            | Error::Protocol(_)
            | Error::UnknownModel(_)
            | Error::CacheMiss(_)
            | Error::BatchAborted { .. } => true,
            Error::Prompt { source, .. } => source.is_backend(),
            _ => false,
        }
    }
}
