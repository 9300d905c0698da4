//! Signal file formats.
//!
//! * CSV: a header row of variable names followed by one row per sample.
//! * Binary: little-endian `f64` values, sample-major (`n_t` rows of `n_v`
//!   values), with a JSON sidecar `<file>.json` holding
//!   `{n_t, n_v, names, dt}`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discretization::SignalMatrix;
use crate::error::{Error, Result};

/// Parses a CSV signal. Errors carry the 1-based line number.
pub fn read_csv<R: Read>(input: R, dt: f64) -> Result<SignalMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Parse { line: 1, message: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().any(String::is_empty) {
        return Err(Error::Parse { line: 1, message: "header must name every column".into() });
    }
    let mut columns = vec![Vec::new(); names.len()];
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != names.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", names.len(), record.len()),
            });
        }
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let x: f64 =
                field.parse().map_err(|_| Error::Parse { line, message: format!("not a number: {field:?}") })?;
            if !x.is_finite() {
                return Err(Error::Parse { line, message: format!("non-finite value {field:?}") });
            }
            col.push(x);
        }
    }
    SignalMatrix::from_columns(columns, names, dt)
}

pub fn read_csv_file(path: &Path, dt: f64) -> Result<SignalMatrix> {
    read_csv(BufReader::new(File::open(path)?), dt)
}

/// Writes a header row and one row per sample, using the shortest decimal
/// representation that round-trips.
pub fn write_csv<W: Write>(signal: &SignalMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(signal.names()).map_err(crate::modeling::csv_err)?;
    for t in 0..signal.n_samples() {
        w.write_record(signal.row(t).iter().map(f64::to_string)).map_err(crate::modeling::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(signal: &SignalMatrix, path: &Path) -> Result<()> {
    write_csv(signal, BufWriter::new(File::create(path)?))
}

/// Metadata stored next to a binary signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinarySidecar {
    pub n_t: usize,
    pub n_v: usize,
    pub names: Vec<String>,
    pub dt: f64,
}

/// Path of the sidecar for a binary file: `<path>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_binary(signal: &SignalMatrix, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for t in 0..signal.n_samples() {
        for v in 0..signal.n_vars() {
            out.write_all(&signal.value(t, v).to_le_bytes())?;
        }
    }
    out.flush()?;
    let meta = BinarySidecar {
        n_t: signal.n_samples(),
        n_v: signal.n_vars(),
        names: signal.names().to_vec(),
        dt: signal.dt(),
    };
    serde_json::to_writer_pretty(BufWriter::new(File::create(sidecar_path(path))?), &meta)?;
    Ok(())
}

pub fn read_binary(path: &Path) -> Result<SignalMatrix> {
    let meta: BinarySidecar = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    if meta.names.len() != meta.n_v {
        return Err(Error::InvalidSignal(format!(
            "sidecar lists {} names for {} variables",
            meta.names.len(),
            meta.n_v
        )));
    }
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let expected = meta.n_t * meta.n_v * 8;
    if bytes.len() != expected {
        return Err(Error::InvalidSignal(format!("binary holds {} bytes, sidecar implies {expected}", bytes.len())));
    }
    let mut columns = vec![Vec::with_capacity(meta.n_t); meta.n_v];
    for (i, chunk) in bytes.chunks_exact(8).enumerate() {
        let x = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
        columns[i % meta.n_v].push(x);
    }
    SignalMatrix::from_columns(columns, meta.names, meta.dt)
}
