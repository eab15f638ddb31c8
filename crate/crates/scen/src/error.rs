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
    #[error("features file, byte {offset}: {msg}")]
    Features { offset: usize, msg: String },
    #[error("metadata file, line {line}: {msg}")]
    Metadata { line: usize, msg: String },
    #[error("checkpoint, byte {offset}: {msg}")]
    Checkpoint { offset: usize, msg: String },
    #[error("config{}: {msg}", line.map(|l| format!(" line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, msg: String },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] scen_core::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config {
            line: None,
            msg: msg.into(),
        }
    }

    /// 2 for a numerical abort during training, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(scen_core::Error::NumericalAbort { .. }) => 2,
            _ => 1,
        }
    }
}
