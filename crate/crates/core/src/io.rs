//! File helpers. Every output goes through [`write_atomic`]: the bytes land in
//! a temporary sibling first and are renamed over the target.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Format { path: path.to_path_buf(), message: e.to_string() })
}

/// Serializes `rows` as CSV preceded by a `# seed=N` comment line.
pub fn csv_bytes<T: Serialize>(seed: Option<u64>, rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    if let Some(seed) = seed {
        out.extend_from_slice(format!("# seed={seed}\n").as_bytes());
    }
    let mut w = csv::Writer::from_writer(&mut out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Invalid(e.to_string()))?;
    drop(w);
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, seed: Option<u64>, rows: &[T]) -> Result<()> {
    write_atomic(path, &csv_bytes(seed, rows)?)
}

/// Reads CSV rows, skipping `#` comment lines.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let fmt = |e: csv::Error| Error::Format { path: path.to_path_buf(), message: e.to_string() };
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).map_err(fmt)?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(fmt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, serde::Serialize, serde::Deserialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn csv_roundtrip_with_seed_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x/rows.csv");
        let rows = vec![Row { a: 1, b: 0.5 }, Row { a: 2, b: 1.25 }];
        write_csv(&p, Some(42), &rows).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# seed=42\na,b\n"));
        assert_eq!(read_csv::<Row>(&p).unwrap(), rows);
        assert_eq!(fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_json::<Row>(Path::new("/nonexistent/q.json")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/q.json"));
    }
}
