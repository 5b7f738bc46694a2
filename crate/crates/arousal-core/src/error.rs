//! Crate-wide error type.
//!
//! Variants are grouped into coarse [`ErrorClass`]es so binaries can map
//! failures onto distinct exit codes: malformed input data ([`ErrorClass::Parse`]),
//! rejected requests or configuration ([`ErrorClass::Validation`]), and file-system
//! trouble ([`ErrorClass::Io`]).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse failure class, used for exit-code mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Input bytes or text that could not be decoded.
    Parse,
    /// A request, configuration, or argument that was rejected.
    Validation,
    /// File-system or device failure.
    Io,
    /// A bug: an internal postcondition did not hold.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error(
        "unsupported rate conversion: {input_hz} Hz -> {output_hz} Hz is not an integer decimation"
    )]
    UnsupportedRatio { input_hz: f64, output_hz: f64 },

    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),

    #[error("fit band too narrow: {0}")]
    InsufficientBand(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("zero-energy input: {0}")]
    ZeroEnergy(String),

    #[error(
        "sparsification rejected: taper {taper} would lose {loss_percent:.4}% of its energy at epsilon {epsilon:e}"
    )]
    SparsityLoss {
        taper: usize,
        loss_percent: f64,
        epsilon: f64,
    },

    /// Malformed binary payload, with the byte offset of the first bad field.
    #[error("format error at byte {offset}: {message}")]
    FormatAt { offset: u64, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    /// Malformed text record, with its 1-based line number.
    #[error("parse error at line {line}: {message}")]
    LineParse { line: usize, message: String },

    #[error("annotation structure error: {0}")]
    Annotation(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("no usable data: {0}")]
    NoData(String),

    #[error("channel {wanted:?} not found; available channels: {available:?}")]
    ChannelNotFound {
        wanted: String,
        available: Vec<String>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("taper cache error: {0}")]
    Cache(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::FormatAt { .. }
            | Error::Format(_)
            | Error::LineParse { .. }
            | Error::Calibration(_) => ErrorClass::Parse,

            Error::InvalidSpec(_)
            | Error::InsufficientData(_)
            | Error::NonFinite(_)
            | Error::UnsupportedRatio { .. }
            | Error::DegenerateSpectrum(_)
            | Error::InsufficientBand(_)
            | Error::LengthMismatch(_)
            | Error::ZeroEnergy(_)
            | Error::SparsityLoss { .. }
            | Error::Annotation(_)
            | Error::Alignment(_)
            | Error::NoData(_)
            | Error::ChannelNotFound { .. }
            | Error::Config(_) => ErrorClass::Validation,

            Error::Cache(_) | Error::Io(_) => ErrorClass::Io,

            Error::Internal(_) => ErrorClass::Internal,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classes_partition_the_variants() {
        assert_eq!(
            Error::Format("bad".into()).class(),
            ErrorClass::Parse,
            "format errors are parse-class"
        );
        assert_eq!(
            Error::Config("bad".into()).class(),
            ErrorClass::Validation,
            "config errors are validation-class"
        );
        assert_eq!(
            Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "x")).class(),
            ErrorClass::Io,
            "io errors are io-class"
        );
    }

    #[test]
    fn messages_carry_location_context() {
        let e = Error::FormatAt {
            offset: 256,
            message: "bad record count".into(),
        };
        assert!(e.to_string().contains("byte 256"), "got: {e}");
        let e = Error::LineParse {
            line: 3,
            message: "unknown stage token".into(),
        };
        assert!(e.to_string().contains("line 3"), "got: {e}");
    }
}
