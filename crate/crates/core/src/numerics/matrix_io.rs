//! Binary matrix checkpoints.
//!
//! `<name>.bin`: 8-byte magic, rows and cols as little-endian `u64`, then
//! `rows·cols` little-endian `f64`. `<name>.hdr`: one text line
//! `rows cols sha256-of-bin`.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::Matrix;
use crate::error::{Error, Result};

pub const MATRIX_MAGIC: &[u8; 8] = b"TNMATv01";

fn header_path(bin: &Path) -> PathBuf {
    bin.with_extension("hdr")
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes `m` to `path` (conventionally `*.bin`) plus its `.hdr` sidecar.
/// Both files are written to a temporary name and renamed into place.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    m.check_finite(&path.display().to_string())?;
    let mut bytes = Vec::with_capacity(24 + 8 * m.as_slice().len());
    bytes.extend_from_slice(MATRIX_MAGIC);
    bytes.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    bytes.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    let header = format!("{} {} {}\n", m.rows(), m.cols(), sha256_hex(&bytes));
    crate::io::write_atomic(path, &bytes)?;
    crate::io::write_atomic(&header_path(path), header.as_bytes())
}

/// Reads a matrix written by [`write_matrix`], verifying the checksum when
/// the header file is present.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let corrupt = |message: &str| Error::Corrupt {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < 24 || &bytes[..8] != MATRIX_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| corrupt("shape overflow"))?;
    if bytes.len() != 24 + 8 * n {
        return Err(corrupt("payload length does not match shape"));
    }
    let hdr = header_path(path);
    if hdr.exists() {
        let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3
            || parts[0] != rows.to_string()
            || parts[1] != cols.to_string()
            || parts[2] != sha256_hex(&bytes)
        {
            return Err(corrupt("header does not match payload"));
        }
    }
    let data = bytes[24..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::from_vec(rows, cols, data)
}
