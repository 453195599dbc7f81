use embsp_core::{AllocError, ConfigError, MsgError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unaligned request on the {driver} driver: disk {disk} offset {offset} len {len} (block {block})")]
    Alignment { driver: &'static str, disk: usize, offset: u64, len: u64, block: usize },
    #[error("region {offset}+{len} exceeds {limit} bytes")]
    RangeOverflow { offset: u64, len: u64, limit: u64 },
    #[error(transparent)]
    Alloc(#[from] AllocError),
    #[error(transparent)]
    Msg(#[from] MsgError),
    #[error("message spec mismatch: VP {src} sends {sent} bytes to VP {dst}, which expects {expected}")]
    SpecMismatch { src: usize, dst: usize, sent: usize, expected: usize },
    #[error("shared buffer overflow: {needed} bytes needed, sigma is {sigma}")]
    BufferOverflow { needed: usize, sigma: usize },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("network error: {0}")]
    Net(String),
    #[error("virtual processor {rho} panicked: {message}")]
    VpPanic { rho: usize, message: String },
    #[error("run aborted")]
    Aborted,
    #[error("virtual processor {rho} called abort with code {code}")]
    UserAbort { rho: usize, code: i32 },
    #[error("{0} is not implemented")]
    NotImplemented(&'static str),
    #[error("runtime used before init")]
    NotInitialized,
    #[error("the indirect delivery area was not reserved (set indirect_omega)")]
    IndirectAreaMissing,
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    /// Errors that merely report another thread's failure.
    pub fn is_secondary(&self) -> bool {
        matches!(self, Error::Aborted)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
