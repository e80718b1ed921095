use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::error::{invalid, Error, Result};
use crate::optimize::Ensemble;

pub const FORMAT_VERSION: u32 = 1;
pub const ARCHIVE_FILE: &str = "archive.json";
/// Stored and recomputed infidelities must agree to this.
pub const VERIFY_TOL: f64 = 1e-10;

/// A CSV table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    /// Index of a header column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, csv::Error>>()?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        Ok(Self { name, header, rows })
    }
}

/// Everything one invocation produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArchive {
    pub format_version: u32,
    pub software_version: String,
    pub experiment: String,
    pub config: ExperimentConfig,
    pub ensembles: Vec<Ensemble>,
    pub summary: serde_json::Value,
    /// CSV files written next to the archive.
    pub csv_files: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub runs_checked: usize,
    pub max_infidelity_error: f64,
    pub passed: bool,
}

impl RunArchive {
    pub fn new(
        config: ExperimentConfig,
        ensembles: Vec<Ensemble>,
        summary: serde_json::Value,
        tables: Vec<Table>,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: config.name().to_string(),
            config,
            ensembles,
            summary,
            csv_files: tables.iter().map(Table::file_name).collect(),
            tables,
        }
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `archive.json` and one CSV per table into `dir`, creating it.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        for table in &self.tables {
            table.write_csv(&dir.join(table.file_name()))?;
        }
        let path = dir.join(ARCHIVE_FILE);
        fs::write(&path, self.to_json()? + "\n")?;
        Ok(path)
    }

    /// Loads an archive from its JSON file or from the directory holding it.
    /// Tables listed in the archive are read back when present.
    pub fn load(path: &Path) -> Result<Self> {
        let file = if path.is_dir() {
            path.join(ARCHIVE_FILE)
        } else {
            path.to_path_buf()
        };
        let text =
            fs::read_to_string(&file).map_err(|e| Error::Io(format!("{}: {e}", file.display())))?;
        let mut archive: RunArchive = serde_json::from_str(&text)?;
        if archive.format_version != FORMAT_VERSION {
            return invalid(format!(
                "archive format {} is not supported (expected {FORMAT_VERSION})",
                archive.format_version
            ));
        }
        let dir = file.parent().unwrap_or(Path::new("."));
        for name in &archive.csv_files {
            let csv_path = dir.join(name);
            if csv_path.exists() {
                archive.tables.push(Table::read_csv(&csv_path)?);
            }
        }
        Ok(archive)
    }

    /// Recomputes every stored run's infidelity from its biases and time.
    pub fn verify(&self) -> Result<VerificationReport> {
        let mut worst: f64 = 0.0;
        let mut runs = 0;
        for ens in &self.ensembles {
            worst = worst.max(ens.reevaluation_error()?);
            runs += ens.runs.len();
        }
        Ok(VerificationReport {
            runs_checked: runs,
            max_infidelity_error: worst,
            passed: worst <= VERIFY_TOL,
        })
    }

    /// Reruns the archived config and returns the largest infidelity
    /// difference over matching runs.
    pub fn reproduce(&self) -> Result<f64> {
        let again = super::run_experiment(&self.config)?;
        if again.ensembles.len() != self.ensembles.len() {
            return Err(Error::Numeric(
                "rerun produced a different number of ensembles".into(),
            ));
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.ensembles.iter().zip(&again.ensembles) {
            if a.runs.len() != b.runs.len() {
                return Err(Error::Numeric(
                    "rerun produced a different number of runs".into(),
                ));
            }
            for (x, y) in a.runs.iter().zip(&b.runs) {
                worst = worst.max((x.infidelity - y.infidelity).abs());
            }
        }
        Ok(worst)
    }
}
