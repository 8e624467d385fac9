use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_bytes};

pub const MANIFEST: &str = "MANIFEST";

/// State of the run that last touched the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Running(String),
    Complete,
    Failed { stage: String, message: String },
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Running(stage) => write!(f, "running {stage}"),
            Status::Complete => f.write_str("complete"),
            Status::Failed { stage, message } => write!(f, "failed {stage}: {message}"),
        }
    }
}

/// Artifact checksums of an output directory, plus the run status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub status: Status,
    /// Artifact name (relative to the directory) to lowercase hex SHA-256.
    pub entries: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VerifyReport {
    pub checked: usize,
    pub mismatched: Vec<String>,
    pub missing: Vec<String>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.mismatched.is_empty() && self.missing.is_empty()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn bad(detail: impl Into<String>) -> Error {
    Error::Format {
        what: "manifest",
        detail: detail.into(),
    }
}

impl Manifest {
    pub fn new(status: Status) -> Self {
        Self {
            status,
            entries: BTreeMap::new(),
        }
    }

    /// The manifest in `dir`, or an empty one if there is none yet.
    pub fn load_or_new(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        if path.exists() {
            Self::read(dir)
        } else {
            Ok(Self::new(Status::Complete))
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let bytes = read_bytes(&dir.join(MANIFEST))?;
        Self::parse(&String::from_utf8(bytes).map_err(|_| bad("not UTF-8"))?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let first = lines.next().ok_or_else(|| bad("empty"))?;
        let status = first.strip_prefix("status ").ok_or_else(|| bad("first line must be a status"))?;
        let status = if status == "complete" {
            Status::Complete
        } else if let Some(stage) = status.strip_prefix("running ") {
            Status::Running(stage.to_string())
        } else if let Some(rest) = status.strip_prefix("failed ") {
            let (stage, message) = rest.split_once(": ").ok_or_else(|| bad("failed status needs a message"))?;
            Status::Failed {
                stage: stage.to_string(),
                message: message.to_string(),
            }
        } else {
            return Err(bad(format!("unknown status `{status}`")));
        };
        let mut entries = BTreeMap::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (hash, name) = line.split_once("  ").ok_or_else(|| bad(format!("bad entry `{line}`")))?;
            if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(bad(format!("bad checksum for {name}")));
            }
            entries.insert(name.to_string(), hash.to_ascii_lowercase());
        }
        Ok(Self { status, entries })
    }

    /// Status line, then `sha256  name` per artifact in name order.
    pub fn to_text(&self) -> String {
        // Keep the status on one line whatever the error message holds.
        let status = self.status.to_string().replace('\n', " ");
        let mut out = format!("status {status}\n");
        for (name, hash) in &self.entries {
            out.push_str(&format!("{hash}  {name}\n"));
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_bytes(&dir.join(MANIFEST), self.to_text().as_bytes())
    }

    /// Hashes the named artifacts as they are now on disk.
    pub fn record<S: AsRef<str>>(&mut self, dir: &Path, names: &[S]) -> Result<()> {
        for name in names {
            let name = name.as_ref();
            let hash = sha256_hex(&read_bytes(&dir.join(name))?);
            self.entries.insert(name.to_string(), hash);
        }
        Ok(())
    }

    /// Re-hashes every recorded artifact.
    pub fn verify(&self, dir: &Path) -> Result<VerifyReport> {
        let mut report = VerifyReport::default();
        for (name, hash) in &self.entries {
            let path = dir.join(name);
            if !path.exists() {
                report.missing.push(name.clone());
                continue;
            }
            report.checked += 1;
            if sha256_hex(&read_bytes(&path)?) != *hash {
                report.mismatched.push(name.clone());
            }
        }
        Ok(report)
    }
}

/// Verifies the manifest stored in `dir`.
pub fn verify_dir(dir: &Path) -> Result<VerifyReport> {
    Manifest::read(dir)?.verify(dir)
}
