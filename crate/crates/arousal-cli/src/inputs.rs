//! Reading and writing recordings by file extension.

use std::fs;
use std::path::Path;

use arousal_core::io::csv::{parse_recording_csv, write_recording_csv};
use arousal_core::io::edf::{parse_edf, write_edf};
use arousal_core::io::Recording;
use arousal_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Edf,
    Csv,
}

/// Keeps the I/O class while naming the path the operation failed on.
pub fn io_at(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Picks the on-disk format from the file extension.
pub fn format_of(path: &Path) -> Result<Format> {
    let extension = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match extension.as_deref() {
        Some("edf") => Ok(Format::Edf),
        Some("csv") => Ok(Format::Csv),
        _ => Err(Error::Config(format!(
            "cannot tell the format of {}: expected a .edf or .csv extension",
            path.display()
        ))),
    }
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    match format_of(path)? {
        Format::Edf => parse_edf(&fs::read(path).map_err(|e| io_at(path, e))?),
        Format::Csv => parse_recording_csv(&fs::read_to_string(path).map_err(|e| io_at(path, e))?),
    }
}

pub fn store_recording(path: &Path, recording: &Recording) -> Result<()> {
    let bytes = match format_of(path)? {
        Format::Edf => write_edf(recording)?,
        Format::Csv => write_recording_csv(recording)?.into_bytes(),
    };
    fs::write(path, bytes).map_err(|e| io_at(path, e))
}
