use thiserror::Error;

use crate::fpcore::{OpClass, Width};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mantissa bit count {bits} out of range 1..={max} for {width}")]
    BitsOutOfRange { bits: u32, max: u32, width: Width },

    #[error("width mismatch: expected {expected}, found {found}")]
    WidthMismatch { expected: Width, found: Width },

    #[error("cannot exit the root scope")]
    ExitRoot,

    #[error("unbalanced scope tracking: {0} frame(s) left open")]
    UnbalancedStack(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown scope `{scope}` for kernel `{kernel}`")]
    UnknownScope { kernel: String, scope: String },

    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),

    #[error("input does not belong to kernel `{0}`")]
    InputMismatch(String),

    #[error("missing EPI entry for {op} {width}")]
    MissingEpi { op: OpClass, width: Width },

    #[error("output shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },

    #[error("search space of {size} configurations exceeds the cap of {cap}")]
    SpaceTooLarge { size: u128, cap: u128 },

    #[error("{0}")]
    Degenerate(String),

    #[error("csv format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),

    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}
