//! Plain-text artifact formats: numeric CSV tables and pretty JSON.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

/// Floats in CSV artifacts carry 17 significant digits, enough to round-trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Writes a header line and one row per item, all cells numeric.
pub fn write_table<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    write_records(path, header, rows.into_iter().map(|r| r.into_iter().map(fmt_f64).collect()))
}

/// Writes pre-formatted cells.
pub fn write_records<I>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = create(path)?;
    let wr = |w: &mut BufWriter<fs::File>, s: &str| w.write_all(s.as_bytes()).map_err(|e| Error::io(path, e));
    wr(&mut w, &header.join(","))?;
    wr(&mut w, "\n")?;
    for r in rows {
        wr(&mut w, &r.join(","))?;
        wr(&mut w, "\n")?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a numeric table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let (header, rows) = read_records(path)?;
    let parsed = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .map(|c| {
                    c.trim().parse::<f64>().map_err(|_| Error::Parse {
                        path: path.into(),
                        reason: format!("row {}: `{c}` is not a number", i + 1),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, parsed))
}

pub fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    if !path.exists() {
        return Err(Error::Dependency(path.into()));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse { path: path.into(), reason: e.to_string() })?;
    let parse_err = |e: csv::Error| Error::Parse { path: path.into(), reason: e.to_string() };
    let header = rdr.headers().map_err(parse_err)?.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::Dependency(path.into()));
    }
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Parse { path: path.into(), reason: e.to_string() })
}
