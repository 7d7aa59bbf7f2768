//! On-disk formats: PFM and PGM rasters, binary PLY clouds, and JSON records.
use std::fs;
use std::path::Path;

use crate::error::{IoError, Result};

pub mod json;
pub mod pfm;
pub mod pgm;
pub mod ply;

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| IoError::io(path, e))
}

/// Writes through a sibling temporary file so readers never see a half-written file.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| IoError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| IoError::io(path, e))
}

/// Whitespace-separated header tokens of the netpbm family, with byte offsets.
pub(crate) struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    file: &'a Path,
    comments: bool,
}

impl<'a> HeaderReader<'a> {
    pub fn new(bytes: &'a [u8], file: &'a Path, comments: bool) -> Self {
        HeaderReader { bytes, pos: 0, file, comments }
    }

    pub fn error(&self, offset: usize, message: impl Into<String>) -> IoError {
        IoError::at_offset(self.file, offset as u64, message)
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if self.comments && b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    /// Next token and its offset.
    pub fn token(&mut self, what: &str) -> Result<(&'a str, usize)> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error(start, format!("header ends before the {what}")));
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| self.error(start, format!("{what} is not ASCII")))?;
        Ok((text, start))
    }

    pub fn parse<T: std::str::FromStr>(&mut self, what: &str) -> Result<(T, usize)> {
        let (text, at) = self.token(what)?;
        let value = text.parse().map_err(|_| self.error(at, format!("invalid {what} {text:?}")))?;
        Ok((value, at))
    }

    pub fn dimension(&mut self, what: &str) -> Result<usize> {
        let (v, at) = self.parse::<usize>(what)?;
        if v == 0 {
            return Err(self.error(at, format!("{what} must be positive")));
        }
        Ok(v)
    }

    /// Consumes the single whitespace byte that ends the header; returns the payload offset.
    pub fn end(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(self.error(self.pos, "header must end with one whitespace byte")),
        }
    }
}

/// Checks that exactly `expected` payload bytes follow `start`.
pub(crate) fn payload<'a>(bytes: &'a [u8], start: usize, expected: usize, file: &Path) -> Result<&'a [u8]> {
    let found = bytes.len().saturating_sub(start);
    if found < expected {
        return Err(IoError::at_offset(
            file,
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes, found {found}"),
        ));
    }
    if found > expected {
        return Err(IoError::at_offset(
            file,
            (start + expected) as u64,
            format!("{} unexpected bytes after the payload", found - expected),
        ));
    }
    Ok(&bytes[start..])
}
