//! Run-directory writers.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub struct RunDir {
    root: PathBuf,
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::Lib(infoflux::Error::Io(e))
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(io_err)?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Pretty-printed JSON with a trailing newline. Field order follows the
    /// struct definitions, so equal values give equal bytes.
    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(infoflux::Error::from)?;
        text.push('\n');
        std::fs::write(self.path(name), text).map_err(io_err)
    }

    pub fn write_table(&self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
        let file = File::create(self.path(name)).map_err(io_err)?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let csv_err = |e: csv::Error| CliError::Config { path: name.to_string(), message: e.to_string() };
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row).map_err(csv_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn writer(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.path(name)).map_err(io_err)?))
    }
}
