//! Artifact directory: CSV tables, JSON documents and the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub ddrsim_version: String,
    pub core_version: String,
    /// sha256 of `config.toml`.
    pub config_sha256: String,
    pub seed: u64,
    pub jobs: usize,
    pub wall_time_s: f64,
    pub rerun: String,
    pub artifacts: Vec<Artifact>,
    pub summary: serde_json::Value,
}

pub fn sha256_hex(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

pub struct ArtifactDir {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(ArtifactDir { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn artifacts(&self) -> &[Artifact] {
        &self.artifacts
    }

    pub fn write_bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        fs::write(self.dir.join(name), data)?;
        self.artifacts.retain(|a| a.file != name);
        self.artifacts.push(Artifact { file: name.to_string(), sha256: sha256_hex(data), bytes: data.len() });
        Ok(())
    }

    /// Comma-separated table with a header row.
    pub fn write_csv<R: AsRef<[f64]>>(&mut self, name: &str, header: &[&str], rows: &[R]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            let r = r.as_ref();
            if r.len() != header.len() {
                return Err(CliError::Io(std::io::Error::other(format!(
                    "{name}: row of {} values for {} columns",
                    r.len(),
                    header.len()
                ))));
            }
            w.write_record(r.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        let data = w.into_inner().map_err(|e| CliError::Io(std::io::Error::other(e.to_string())))?;
        self.write_bytes(name, &data)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut data = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        data.push(b'\n');
        self.write_bytes(name, &data)
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), CliError> {
        let mut data = serde_json::to_vec_pretty(manifest).map_err(|e| CliError::Io(std::io::Error::other(e)))?;
        data.push(b'\n');
        fs::write(self.dir.join("manifest.json"), data)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(std::io::Error::other(e.to_string()))
}

/// Plotting template written next to the data; plots every numeric column
/// of each CSV against its first column.
pub const PLOT_TEMPLATE: &str = r#"import csv
import pathlib
import sys

import matplotlib.pyplot as plt

here = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else ".")
for path in sorted(here.glob("*.csv")):
    with open(path) as f:
        rows = list(csv.reader(f))
    header, data = rows[0], [[float(x) for x in r] for r in rows[1:]]
    if not data:
        continue
    fig, ax = plt.subplots()
    for k in range(1, len(header)):
        ax.plot([r[0] for r in data], [r[k] for r in data], ".", ms=2, label=header[k])
    ax.set_xlabel(header[0])
    ax.legend()
    fig.savefig(path.with_suffix(".png"), dpi=150)
"#;
