use crate::error::CliError;
use serde::Serialize;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Shortest text that parses back to the same double.
pub fn full(x: f64) -> String {
    format!("{x:?}")
}

/// Rounded to 15 significant digits, then printed in shortest form.
pub fn sig15(x: f64) -> String {
    let rounded: f64 = format!("{x:.14e}").parse().expect("formatted float parses");
    format!("{rounded:?}")
}

pub fn optional(x: Option<f64>) -> String {
    x.map(full).unwrap_or_default()
}

/// Output directory; every file written through it is listed in the manifest.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<usize, CliError> {
        let path = self.path(name);
        let io = |e: csv::Error| CliError::io(&path, e);
        let mut w = csv::Writer::from_path(&path).map_err(io)?;
        w.write_record(header).map_err(io)?;
        let mut count = 0;
        for row in rows {
            w.write_record(&row).map_err(io)?;
            count += 1;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(count)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(&path, e))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub scenario_hash: String,
    pub timestamp: String,
    pub subcommand: String,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, scenario_hash: String, outputs: &[String]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario_hash,
            timestamp: chrono::Utc::now().to_rfc3339(),
            subcommand: subcommand.to_string(),
            outputs: outputs.to_vec(),
        }
    }

    pub fn file_name(subcommand: &str) -> String {
        format!("{subcommand}.manifest.json")
    }
}
