//! Run directory: every file a run writes goes through here so the manifest
//! can list them.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mfg_lab::grid::io;
use mfg_lab::{Field, Flux};
use serde::Serialize;

use crate::error::CliError;

pub struct RunDir {
    root: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self { root: root.to_path_buf(), files: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn record(&mut self, name: &str) {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.record(name);
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    /// Streams a text file through `body`.
    pub fn write_with(
        &mut self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<fs::File>) -> mfg_lab::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.root.join(name);
        let file = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush()?;
        self.record(name);
        Ok(())
    }

    pub fn write_csv_rows<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<(), CliError> {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
        }
        w.flush()?;
        self.record(name);
        Ok(())
    }

    /// `<stem>.bin` in the binary field format plus `<stem>.csv`.
    pub fn write_field(&mut self, stem: &str, field: &Field) -> Result<(), CliError> {
        self.write_bytes(&format!("{stem}.bin"), &io::scalar_to_bytes(field))?;
        self.write_with(&format!("{stem}.csv"), |w| io::write_scalar_csv(field, w))
    }

    pub fn write_flux(&mut self, stem: &str, field: &Flux) -> Result<(), CliError> {
        self.write_bytes(&format!("{stem}.bin"), &io::flux_to_bytes(field))?;
        self.write_with(&format!("{stem}.csv"), |w| io::write_flux_csv(field, w))
    }
}
