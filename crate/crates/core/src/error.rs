use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("training failed at epoch {epoch}: {reason} (last finite loss {last_loss:e})")]
    Training {
        epoch: usize,
        reason: String,
        last_loss: f64,
    },

    #[error("ADMM diverged at outer iteration {iteration}: consensus residual {residual:e} exceeds 10x initial {initial:e}")]
    Divergence {
        iteration: usize,
        residual: f64,
        initial: f64,
    },

    #[error("malformed frame: {0}")]
    MalformedFrame(FrameError),

    #[error("EVM undefined: reference symbols carry zero power")]
    ZeroReference,

    #[error("block {block_id}: {source}")]
    Block {
        block_id: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

/// Failure classes for wire-frame decoding.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u16),
    #[error("unknown frame kind {0}")]
    UnknownKind(u8),
    #[error("crc mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Crc { stored: u32, computed: u32 },
    #[error("payload does not match declared dimensions: {0}")]
    Layout(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

impl From<FrameError> for Error {
    fn from(e: FrameError) -> Self {
        Error::MalformedFrame(e)
    }
}

pub type Result<T> = std::result::Result<T, Error>;
