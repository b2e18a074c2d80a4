use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config invariant violated: {0}")]
    Invariant(String),
    #[error("unknown preset or missing config file: {0}")]
    UnknownConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("misaligned address {addr:#x} for width {width}")]
    Misaligned { addr: u64, width: u32 },
    #[error("SMA unit busy: {0}")]
    UnitBusy(String),
    #[error("operand out of range: {0}")]
    OutOfRange(String),
    #[error("unsupported op `{op}` on this machine config: {reason}")]
    UnsupportedOp { op: String, reason: String },
    #[error("zero-cycle trace")]
    ZeroCycleTrace,
    #[error("energy table mismatch: {0}")]
    TableMismatch(String),
    #[error("unknown event kind in trace: {0}")]
    UnknownEvent(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type SimResult<T> = Result<T, SimError>;
