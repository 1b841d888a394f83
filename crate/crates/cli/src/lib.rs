//! Experiment driver behind the `qhalab` binary.
//!
//! Each command returns a JSON report plus a status. Reports use sorted
//! keys and contain no timings, so equal inputs give equal bytes.

pub mod commands;
pub mod config;

use std::path::{Path, PathBuf};

use serde_json::Value;
use thiserror::Error;

pub use config::ExperimentConfig;

/// Process exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass = 0,
    Failure = 1,
    Invalid = 2,
    Malformed = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("malformed input: {0}")]
    Malformed(String),
}

impl CommandError {
    pub fn status(&self) -> Status {
        match self {
            CommandError::Invalid(_) => Status::Invalid,
            CommandError::Malformed(_) => Status::Malformed,
        }
    }
}

/// A finished command: its report and any extra files, not yet written.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub report: Value,
    pub artifacts: Vec<(String, String)>,
    pub passed: bool,
}

impl Outcome {
    pub fn status(&self) -> Status {
        if self.passed {
            Status::Pass
        } else {
            Status::Failure
        }
    }

    pub fn report_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.report).expect("reports serialize");
        text.push('\n');
        text
    }

    /// Writes `<name>.json` and the artifacts into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CommandError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CommandError::Invalid(format!("cannot create {}: {e}", dir.display())))?;
        let mut written = Vec::new();
        let report = (format!("{}.json", self.name), self.report_text());
        for (file, body) in std::iter::once(&report).chain(&self.artifacts) {
            let path = dir.join(file);
            std::fs::write(&path, body)
                .map_err(|e| CommandError::Invalid(format!("cannot write {}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}
