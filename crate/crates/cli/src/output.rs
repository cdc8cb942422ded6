//! Output directory handling: CSV and JSON artifacts plus `manifest.json`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// Everything needed to rerun a command and find its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub library_version: String,
    pub cli_version: String,
    /// The fully resolved configuration, common keys included.
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub threads: usize,
    pub started_unix_s: u64,
    pub wall_clock_s: f64,
    pub artifacts: Vec<String>,
}

pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<String>,
    started: Instant,
    started_unix_s: u64,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            started: Instant::now(),
            started_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Path of an artifact written by the caller; it is listed in the manifest.
    pub fn artifact_path(&mut self, name: &str) -> PathBuf {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
        self.path(name)
    }

    /// Writes `rows` with a header taken from the row type's field names.
    pub fn write_csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<PathBuf> {
        let path = self.artifact_path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(path)
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<PathBuf> {
        let path = self.artifact_path(name);
        let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(file), value)?;
        Ok(path)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.artifact_path(name);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    /// Writes `manifest.json` and returns it.
    pub fn finish(self, command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Result<Manifest> {
        let manifest = Manifest {
            command: command.to_string(),
            library_version: lassoprune::VERSION.to_string(),
            cli_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            threads: rayon::current_num_threads(),
            started_unix_s: self.started_unix_s,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            artifacts: self.artifacts.clone(),
        };
        let file = File::create(self.path("manifest.json"))?;
        serde_json::to_writer_pretty(BufWriter::new(file), &manifest)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        a: u32,
        b: f64,
    }

    #[test]
    fn csv_header_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(&dir.path().join("run")).unwrap();
        out.write_csv("rows.csv", &[Row { a: 1, b: 0.5 }, Row { a: 2, b: 1.5 }])
            .unwrap();
        out.write_json("report.json", &serde_json::json!({"x": 1})).unwrap();
        let text = std::fs::read_to_string(out.path("rows.csv")).unwrap();
        assert_eq!(text, "a,b\n1,0.5\n2,1.5\n");
        let m = out.finish("demo", serde_json::json!({"seed": 4}), vec![4]).unwrap();
        assert_eq!(m.artifacts, vec!["rows.csv", "report.json"]);
        let back: Manifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/manifest.json")).unwrap()).unwrap();
        assert_eq!(back.seeds, vec![4]);
        assert_eq!(back.library_version, lassoprune::VERSION);
    }
}
