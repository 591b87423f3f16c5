//! Line-delimited canonical JSON.
//!
//! Every line is a single JSON object with lexicographically ordered keys
//! and a `"v": 1` schema tag. Floats are written in shortest round-trip
//! form, so encode/decode is lossless and identical values produce
//! identical bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Schema version written into every line.
pub const SCHEMA_VERSION: u64 = 1;

/// Encode `value` as one canonical line (no trailing newline).
///
/// Panics only if `value` cannot be represented as JSON (non-finite floats,
/// non-string map keys), which the domain types rule out by construction.
pub fn to_line<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("domain types always serialize to JSON");
    if let Value::Object(map) = &mut v {
        map.insert("v".to_owned(), Value::from(SCHEMA_VERSION));
    }
    let mut out = String::new();
    write_canonical(&v, &mut out);
    out
}

/// Canonical rendering of an arbitrary JSON value with sorted object keys.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string keys encode"));
                out.push(':');
                write_canonical(&map[k], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

#[derive(Deserialize)]
struct Header {
    v: Option<u64>,
}

/// Decode one line. Syntax and type errors carry the byte offset and, when
/// known, the dotted path of the offending field.
pub fn from_line<T: DeserializeOwned>(line: &str) -> Result<T> {
    let line = line.trim_end_matches(['\n', '\r']);
    let mut de = serde_json::Deserializer::from_str(line);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            offset: inner.column(),
            field: (path != "." && !path.is_empty()).then_some(path),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| Error::Parse {
        offset: e.column(),
        field: None,
        message: e.to_string(),
    })?;
    let header: Header = serde_json::from_str(line).map_err(|e| Error::Parse {
        offset: e.column(),
        field: None,
        message: e.to_string(),
    })?;
    match header.v {
        Some(SCHEMA_VERSION) => Ok(value),
        Some(other) => Err(Error::validation(
            "v",
            format!("unsupported schema version {other}"),
        )),
        None => Err(Error::validation("v", "missing schema version")),
    }
}

/// Decode every non-empty line of a file.
pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(from_line)
        .collect()
}

/// Encode items one per line, `\n` terminated.
pub fn encode_lines<'a, T: Serialize + 'a>(items: impl IntoIterator<Item = &'a T>) -> String {
    let mut out = String::new();
    for item in items {
        out.push_str(&to_line(item));
        out.push('\n');
    }
    out
}

/// Write `bytes` to `path` through a sibling temp file and a rename, so
/// readers never observe a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Append one encoded line to a log file, creating it if needed.
pub fn append_line<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut line = to_line(item);
    line.push('\n');
    f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.sync_data().map_err(|e| Error::io(path, e))
}
