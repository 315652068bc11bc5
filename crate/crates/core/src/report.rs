//! CSV tables, criterion outcomes and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::Result;

/// Fixed float rendering used in every table.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.9e}")
}

/// A CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    /// File stem; the table is written to `<name>.csv`.
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
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for line in std::iter::once(&self.header).chain(&self.rows) {
            let cells: Vec<String> = line.iter().map(|c| escape(c)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.to_csv())?;
        Ok(path)
    }
}

fn escape(cell: &str) -> String {
    if cell.contains([',', '"', '\n']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}

/// Pass/fail outcome of one acceptance criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: String,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    /// `master_seed:path_index` of the paths that violated the criterion.
    pub failing_seeds: Vec<String>,
}

impl CriterionResult {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        passed: bool,
        detail: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            passed,
            detail: detail.into(),
            failing_seeds: Vec::new(),
        }
    }

    pub fn with_failing_seeds(mut self, seeds: Vec<String>) -> Self {
        self.failing_seeds = seeds;
        self
    }

    pub fn line(&self) -> String {
        format!(
            "criterion {:<4} {} | {} | {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.detail
        )
    }
}

/// Everything a suite produces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteOutput {
    pub tables: Vec<Table>,
    pub criteria: Vec<CriterionResult>,
}

impl SuiteOutput {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }

    pub fn failing_seeds(&self) -> Vec<String> {
        self.criteria
            .iter()
            .flat_map(|c| c.failing_seeds.clone())
            .collect()
    }

    pub fn extend(&mut self, other: SuiteOutput) {
        self.tables.extend(other.tables);
        self.criteria.extend(other.criteria);
    }
}

/// Run metadata written next to the tables.
#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub suite: String,
    pub config_hash: String,
    pub version: String,
    pub master_seed: u64,
    /// Seconds since the Unix epoch; the only field that changes between identical runs.
    pub wall_clock: u64,
    pub config: String,
    pub criteria: Vec<CriterionResult>,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    let digest = Sha256::digest(config.to_canonical().as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl RunManifest {
    pub fn new(suite: &str, config: &ExperimentConfig, criteria: Vec<CriterionResult>) -> Self {
        Self {
            suite: suite.to_string(),
            config_hash: config_hash(config),
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: config.master_seed,
            wall_clock: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            config: config.to_canonical(),
            criteria,
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "suite = {}", self.suite);
        let _ = writeln!(s, "version = {}", self.version);
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "wall_clock = {}", self.wall_clock);
        s.push_str("\n[config]\n");
        s.push_str(&self.config);
        s.push_str("\n[criteria]\n");
        for c in &self.criteria {
            let seeds = if c.failing_seeds.is_empty() {
                String::new()
            } else {
                format!(" | failing: {}", c.failing_seeds.join(" "))
            };
            let _ = writeln!(
                s,
                "{} = {} | {}{}",
                c.id,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail,
                seeds
            );
        }
        s
    }

    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.txt");
        fs::write(&path, self.render())?;
        Ok(path)
    }
}
