//! Readers for Standard MIDI Files, MusicXML (plain and `.mxl`), Humdrum
//! `**kern`, and the tab-separated harmony annotation sidecar.
//!
//! All parsers are pure functions of their input bytes. They never panic on
//! arbitrary input: every input yields either a [`Score`] or a [`ParseError`].

mod annotations;
mod common;
mod kern;
mod midi;
mod musicxml;

use std::fmt;
use std::path::Path;

use serde::Serialize;

use crate::model::{Score, SourceFormat};

pub use annotations::parse_annotations;
pub use kern::parse_kern;
pub use midi::parse_midi;
pub use musicxml::{parse_musicxml, parse_mxl};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    Io,
    MalformedHeader,
    MalformedEvent,
    UnsupportedConstruct,
    Encoding,
}

impl ParseErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseErrorKind::Io => "io",
            ParseErrorKind::MalformedHeader => "malformed_header",
            ParseErrorKind::MalformedEvent => "malformed_event",
            ParseErrorKind::UnsupportedConstruct => "unsupported_construct",
            ParseErrorKind::Encoding => "encoding",
        }
    }
}

/// A per-file parse failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseError {
    pub path: String,
    pub kind: ParseErrorKind,
    pub detail: String,
    /// Byte offset (binary formats) or 1-based line number (text formats).
    pub byte_or_line: Option<u64>,
}

impl ParseError {
    pub fn new(path: &str, kind: ParseErrorKind, detail: impl Into<String>) -> Self {
        ParseError { path: path.to_string(), kind, detail: detail.into(), byte_or_line: None }
    }

    pub fn at(mut self, position: u64) -> Self {
        self.byte_or_line = Some(position);
        self
    }

    /// Only I/O failures can succeed on retry.
    pub fn is_retryable(&self) -> bool {
        self.kind == ParseErrorKind::Io
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.kind.as_str())?;
        if let Some(p) = self.byte_or_line {
            write!(f, " at {p}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

impl std::error::Error for ParseError {}

/// Score format implied by a file extension.
pub fn detect_format(path: &Path) -> Option<SourceFormat> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "mid" | "midi" => Some(SourceFormat::Midi),
        "xml" | "musicxml" | "mxl" => Some(SourceFormat::MusicXml),
        "krn" => Some(SourceFormat::Kern),
        _ => None,
    }
}

/// Parses `bytes` as the given format. `.mxl` containers are recognised by
/// their ZIP signature.
pub fn parse_bytes(bytes: &[u8], path: &str, format: SourceFormat) -> Result<Score, ParseError> {
    match format {
        SourceFormat::Midi => parse_midi(bytes, path),
        SourceFormat::MusicXml if bytes.starts_with(b"PK\x03\x04") => parse_mxl(bytes, path),
        SourceFormat::MusicXml => parse_musicxml(bytes, path),
        SourceFormat::Kern => parse_kern(&decode_text(bytes), path),
    }
}

/// Decodes text as UTF-8, falling back to Latin-1 when that fails.
pub fn decode_text(bytes: &[u8]) -> String {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_string(),
        Err(_) => bytes.iter().map(|&b| char::from(b)).collect(),
    }
}
