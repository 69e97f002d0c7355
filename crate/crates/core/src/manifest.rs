//! Run manifests: everything needed to regenerate a batch of outputs.
//!
//! A manifest embeds the full text of every configuration file it was
//! produced from, so a replay does not depend on the originals still being
//! on disk. Inputs that are data rather than configuration (counts files fed
//! to `analyze`) are referenced by path and checksum.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSnapshot {
    /// Where the file was read from, for reference only.
    pub path: PathBuf,
    pub sha256: String,
    pub text: String,
}

impl ConfigSnapshot {
    pub fn new(path: &Path, text: String) -> Self {
        Self {
            path: path.to_path_buf(),
            sha256: sha256_hex(text.as_bytes()),
            text,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            sha256: sha256_hex(&data),
        })
    }

    /// File name only, used to match outputs across output directories.
    pub fn file_name(&self) -> String {
        self.path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    }
}

/// Parameters of a `run` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub mode: String,
    pub n_trials: u64,
    pub seed: u64,
    /// The seed actually fed to the trial generators.
    pub stream_seed: u64,
    pub workers: Option<usize>,
    pub plan: ConfigSnapshot,
    pub device: ConfigSnapshot,
    pub noise: ConfigSnapshot,
}

/// Parameters of an `analyze` invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeRecord {
    pub snr_definition: String,
    pub signal: FileRecord,
    pub noise: FileRecord,
    pub plan: Option<ConfigSnapshot>,
    pub device: Option<ConfigSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub wall_clock_s: f64,
    /// Short human-readable digest of the resolved configuration.
    #[serde(default)]
    pub summary: Vec<String>,
    pub run: Option<RunRecord>,
    pub analyze: Option<AnalyzeRecord>,
    #[serde(default)]
    pub outputs: Vec<FileRecord>,
}

impl RunManifest {
    pub fn for_run(run: RunRecord) -> Self {
        Self::new("run", Some(run), None)
    }

    pub fn for_analyze(analyze: AnalyzeRecord) -> Self {
        Self::new("analyze", None, Some(analyze))
    }

    fn new(command: &str, run: Option<RunRecord>, analyze: Option<AnalyzeRecord>) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            wall_clock_s: 0.0,
            summary: Vec::new(),
            run,
            analyze,
            outputs: Vec::new(),
        }
    }

    pub fn set_duration(&mut self, d: Duration) {
        self.wall_clock_s = d.as_secs_f64();
    }

    pub fn record_output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let m: Self = toml::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string().trim_end().to_string(),
        })?;
        match (m.command.as_str(), &m.run, &m.analyze) {
            ("run", Some(_), None) | ("analyze", None, Some(_)) => Ok(m),
            _ => Err(Error::Parse {
                path: path.to_path_buf(),
                message: format!("command `{}` does not match the recorded sections", m.command),
            }),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// Outcome of comparing regenerated outputs against a manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub matched: Vec<String>,
    /// `(file name, recorded sha256, regenerated sha256)`.
    pub differing: Vec<(String, String, String)>,
    pub missing: Vec<String>,
}

impl ReplayReport {
    pub fn is_identical(&self) -> bool {
        self.differing.is_empty() && self.missing.is_empty()
    }
}

/// Compares the recorded outputs with files of the same name in `dir`.
pub fn compare_outputs(recorded: &[FileRecord], dir: &Path) -> Result<ReplayReport> {
    let mut report = ReplayReport::default();
    for r in recorded {
        let name = r.file_name();
        let fresh = dir.join(&name);
        if !fresh.exists() {
            report.missing.push(name);
            continue;
        }
        let now = FileRecord::of(&fresh)?;
        if now.sha256 == r.sha256 {
            report.matched.push(name);
        } else {
            report.differing.push((name, r.sha256.clone(), now.sha256));
        }
    }
    Ok(report)
}
