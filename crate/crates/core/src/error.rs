use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown modulation format `{0}`")]
    UnknownFormat(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{op}: shape mismatch, expected {expected}, got {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },
    #[error("path delay of {delay_samples:.3} samples exceeds frame length {frame_len}")]
    DelayExceedsFrame { delay_samples: f64, frame_len: usize },
    #[error("input frame has zero power, SNR is undefined")]
    ZeroPower,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("frame of {len} samples is shorter than one filter span ({span})")]
    FrameTooShort { len: usize, span: usize },
    #[error("non-finite gradient in `{0}`")]
    NonFiniteGradient(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
