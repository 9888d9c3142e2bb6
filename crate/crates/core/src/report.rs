//! The `report.json` document written by every run.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coefficients::validate::HypothesisReport;
use crate::diagnostics::{DegeneracyReport, IndependenceReport, LadderReport, MomentReport};
use crate::error::{Error, Result};
use crate::persistence::{now_rfc3339, sha256_hex};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub subcommand: String,
    /// Excluded from `content_hash`.
    pub created_at: String,
    /// sha256 of this document with `created_at` and `content_hash` blank.
    pub content_hash: String,
    /// The resolved configuration.
    pub config: serde_json::Value,
    /// Headline diagnostic, also printed by the CLI.
    pub summary: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hypotheses: Vec<HypothesisReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_moment: Option<MomentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment_moment: Option<MomentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degeneracy: Option<DegeneracyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder: Option<LadderReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub independence: Vec<IndependenceReport>,
    /// Store files written by the run, relative to the output directory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(subcommand: impl Into<String>, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            subcommand: subcommand.into(),
            config: serde_json::to_value(config).map_err(|e| Error::Format(e.to_string()))?,
            ..Self::default()
        })
    }

    pub fn compute_hash(&self) -> Result<String> {
        let mut blank = self.clone();
        blank.created_at.clear();
        blank.content_hash.clear();
        let bytes = serde_json::to_vec(&blank).map_err(|e| Error::Format(e.to_string()))?;
        Ok(sha256_hex(&bytes))
    }

    /// Stamps the timestamp and hash, then writes `report.json` in `dir`.
    pub fn write(&mut self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        self.created_at = now_rfc3339();
        self.content_hash = self.compute_hash()?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(REPORT_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(REPORT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}
