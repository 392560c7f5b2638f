//! Reader and writer for version-1.0 `.npy` array files.
//!
//! Supports C-ordered little-endian f32/f64 payloads, which covers the
//! published segment banks and this crate's own checkpoints. f32 input is
//! widened to f64 on load; files are always written as f64.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 6] = b"\x93NUMPY";

/// In-memory array: shape plus row-major values.
#[derive(Debug, Clone, PartialEq)]
pub struct NpyArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NpyArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || expected != data.len() {
            return Err(Error::Format(format!(
                "array shape {shape:?} inconsistent with {} elements",
                data.len()
            )));
        }
        Ok(NpyArray { shape, data })
    }
}

/// Load a `.npy` file.
pub fn read_npy(path: &Path) -> Result<NpyArray> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    parse_npy(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn parse_npy(bytes: &[u8]) -> Result<NpyArray> {
    if bytes.len() < 10 {
        return Err(Error::Format("file shorter than the fixed header".into()));
    }
    if &bytes[..6] != MAGIC {
        return Err(Error::Format("bad magic string, not an .npy file".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::Format(format!(
            "unsupported format version {major}.{minor}, only 1.0 is handled"
        )));
    }
    let header_len = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let data_start = 10 + header_len;
    if bytes.len() < data_start {
        return Err(Error::Format("header length exceeds file size".into()));
    }
    let header = std::str::from_utf8(&bytes[10..data_start])
        .map_err(|_| Error::Format("header is not valid UTF-8".into()))?;

    let descr = extract_quoted(header, "descr")?;
    let item_size = match descr {
        "<f8" => 8,
        "<f4" => 4,
        other => {
            return Err(Error::Format(format!(
                "unsupported dtype {other:?}, need little-endian '<f4' or '<f8'"
            )))
        }
    };
    match extract_bool(header, "fortran_order")? {
        false => {}
        true => {
            return Err(Error::Format(
                "fortran_order is True, only C-order is handled".into(),
            ))
        }
    }
    let shape = extract_shape(header)?;
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::Format(format!("unsupported shape {shape:?}")));
    }

    let count: usize = shape.iter().product();
    let payload = &bytes[data_start..];
    if payload.len() != count * item_size {
        return Err(Error::Format(format!(
            "payload holds {} bytes, shape {shape:?} as {descr} needs {}",
            payload.len(),
            count * item_size
        )));
    }

    let data: Vec<f64> = match item_size {
        8 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
    };
    Ok(NpyArray { shape, data })
}

/// Write `data` with the given shape as a version-1.0 f64 `.npy` file.
pub fn write_npy(path: &Path, shape: &[usize], data: &[f64]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if shape.is_empty() || shape.contains(&0) || expected != data.len() {
        return Err(Error::Format(format!(
            "shape {shape:?} inconsistent with {} elements",
            data.len()
        )));
    }

    let shape_str = match shape.len() {
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let dict = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': {shape_str}, }}");
    // pad so the payload starts on a 64-byte boundary, newline-terminated
    let unpadded = 10 + dict.len() + 1;
    let padding = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + padding + 1;

    let mut out = Vec::with_capacity(10 + header_len + data.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header_len as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out.extend(std::iter::repeat(b' ').take(padding));
    out.push(b'\n');
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }

    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn extract_quoted<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let value = value_after_key(header, key)?;
    let rest = value
        .strip_prefix('\'')
        .ok_or_else(|| Error::Format(format!("{key} value is not quoted")))?;
    let end = rest
        .find('\'')
        .ok_or_else(|| Error::Format(format!("{key} value is unterminated")))?;
    Ok(&rest[..end])
}

fn extract_bool(header: &str, key: &str) -> Result<bool> {
    let value = value_after_key(header, key)?;
    if value.starts_with("False") {
        Ok(false)
    } else if value.starts_with("True") {
        Ok(true)
    } else {
        Err(Error::Format(format!("{key} is neither True nor False")))
    }
}

fn extract_shape(header: &str) -> Result<Vec<usize>> {
    let value = value_after_key(header, "shape")?;
    let rest = value
        .strip_prefix('(')
        .ok_or_else(|| Error::Format("shape is not a tuple".into()))?;
    let end = rest
        .find(')')
        .ok_or_else(|| Error::Format("shape tuple is unterminated".into()))?;
    rest[..end]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Format(format!("bad shape entry {s:?}")))
        })
        .collect()
}

fn value_after_key<'a>(header: &'a str, key: &str) -> Result<&'a str> {
    let quoted = format!("'{key}'");
    let at = header
        .find(&quoted)
        .ok_or_else(|| Error::Format(format!("header is missing {key}")))?;
    let rest = &header[at + quoted.len()..];
    let colon = rest
        .find(':')
        .ok_or_else(|| Error::Format(format!("{key} has no value")))?;
    Ok(rest[colon + 1..].trim_start())
}
