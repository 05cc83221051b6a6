//! Output directory, CSV writing and the run manifest.

use std::path::{Path, PathBuf};

use anyhow::Context as _;
use serde::Serialize;

pub const MANIFEST: &str = "manifest.toml";

pub struct OutputDir {
    root: PathBuf,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<OutputDir> {
        std::fs::create_dir_all(root).with_context(|| format!("output: cannot create {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `rows` under `header`; every cell is already formatted.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("output: cannot write {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal form, independent of locale and thread count.
pub fn num(x: f64) -> String {
    format!("{x}")
}

#[derive(Serialize)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub subcommand: String,
    pub seed: u64,
    pub config_path: String,
    pub outputs: Vec<String>,
    pub pass: bool,
    pub summary: String,
    /// Verbatim text of the config file.
    pub config: String,
}

impl Manifest {
    pub fn write(&self, out: &OutputDir) -> anyhow::Result<()> {
        let text = toml::to_string(self)?;
        let path = out.path(MANIFEST);
        std::fs::write(&path, text).with_context(|| format!("output: cannot write {}", path.display()))
    }
}
