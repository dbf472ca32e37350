//! Small filesystem helpers shared by the artifact writers.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Hex SHA-256 of a file's contents.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(crate::numerics::sha256_hex(&bytes))
}

/// Writes embeddings as text: a `rows cols` header, then one line per node
/// with its id followed by the row values.
pub fn write_embeddings_text(path: &Path, names: &[String], z: &crate::numerics::Matrix) -> Result<()> {
    use std::fmt::Write;
    if names.len() != z.rows() {
        return Err(Error::shape(z.shape_str(), format!("{} node ids", names.len())));
    }
    let mut s = format!("{} {}\n", z.rows(), z.cols());
    for (name, r) in names.iter().zip(0..z.rows()) {
        s.push_str(name);
        for v in z.row(r) {
            write!(s, " {v}").unwrap();
        }
        s.push('\n');
    }
    write_atomic(path, s.as_bytes())
}

/// Reads the format of [`write_embeddings_text`].
pub fn read_embeddings_text(path: &Path) -> Result<(Vec<String>, crate::numerics::Matrix)> {
    let text = read_to_string(path)?;
    let bad = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad(1, "missing header".into()))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(1, format!("bad header `{header}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad(1, format!("header `{header}` is not `rows cols`")));
    };
    let mut names = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * cols);
    for (k, line) in lines.enumerate() {
        let mut parts = line.split_whitespace();
        let Some(name) = parts.next() else { continue };
        names.push(name.to_string());
        let before = data.len();
        for t in parts {
            data.push(t.parse::<f64>().map_err(|_| bad(k + 2, format!("bad value `{t}`")))?);
        }
        if data.len() - before != cols {
            return Err(bad(k + 2, format!("expected {cols} values, found {}", data.len() - before)));
        }
    }
    if names.len() != rows {
        return Err(bad(rows + 1, format!("expected {rows} rows, found {}", names.len())));
    }
    Ok((names, crate::numerics::Matrix::from_vec(rows, cols, data)?))
}
