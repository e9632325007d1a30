//! Line-delimited JSON persistence shared by the graph stores.
//!
//! A store directory holds a `header` file whose first line is the format
//! version string and whose second line is a JSON metadata object, plus any
//! number of `*.jsonl` files with one record per line. Records are written
//! through serde so key order follows struct field order, which keeps the
//! output byte-stable.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::StoreError;

pub(crate) const HEADER_FILE: &str = "header";

pub(crate) fn write_header<M: Serialize>(dir: &Path, version: &str, meta: &M) -> Result<(), StoreError> {
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(HEADER_FILE))?);
    writeln!(out, "{version}")?;
    serde_json::to_writer(&mut out, meta)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn read_header<M: DeserializeOwned>(dir: &Path, version: &str) -> Result<M, StoreError> {
    let path = dir.join(HEADER_FILE);
    let text = match fs::read_to_string(&path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(StoreError::FormatVersion {
                expected: version.to_string(),
                found: None,
            })
        }
        Err(e) => return Err(e.into()),
    };
    let mut lines = text.lines();
    let found = lines.next().unwrap_or_default().trim();
    if found != version {
        return Err(StoreError::FormatVersion {
            expected: version.to_string(),
            found: Some(found.to_string()),
        });
    }
    let meta = lines.next().ok_or_else(|| StoreError::Corrupt("header has no metadata line".into()))?;
    Ok(serde_json::from_str(meta)?)
}

pub(crate) fn write_lines<T, I>(path: &Path, records: I) -> Result<usize, StoreError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut out = BufWriter::new(File::create(path)?);
    let mut n = 0;
    for record in records {
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

pub(crate) fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| StoreError::Corrupt(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(record);
    }
    Ok(out)
}
