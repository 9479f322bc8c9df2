//! Per-stage JSONL artifacts under `runs/<fingerprint>/`.
//!
//! Every record carries the run fingerprint so a stage can refuse inputs
//! produced under a different configuration. Writes go to a temp file in the
//! same directory followed by a rename, so a dependent stage either sees a
//! complete artifact or none at all.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::errors::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub stage: String,
    /// `*` on stage-level summary rows.
    pub question_id: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ktype: Option<String>,
    pub payload: serde_json::Value,
    pub timestamp: u64,
    pub fingerprint: String,
}

impl RunRecord {
    pub fn new(
        stage: &str,
        question_id: impl Into<String>,
        ktype: Option<String>,
        payload: serde_json::Value,
        fingerprint: &str,
    ) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunRecord {
            stage: stage.to_string(),
            question_id: question_id.into(),
            ktype,
            payload,
            timestamp,
            fingerprint: fingerprint.to_string(),
        }
    }
}

pub fn artifact_path(dir: &Path, stage: &str) -> PathBuf {
    dir.join(format!("{stage}.jsonl"))
}

/// Serializes records line by line into a temp file, then renames it over
/// the final path.
pub fn write_records(dir: &Path, stage: &str, records: &[RunRecord]) -> anyhow::Result<PathBuf> {
    let mut body = Vec::new();
    for r in records {
        serde_json::to_writer(&mut body, r).context("serializing run record")?;
        body.push(b'\n');
    }
    let path = artifact_path(dir, stage);
    write_atomic(&path, &body)?;
    Ok(path)
}

/// Atomic byte write for non-JSONL artifacts (reports, masked graph, index).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .with_context(|| format!("bad artifact path {}", path.display()))?;
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f =
            fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)
            .with_context(|| format!("writing {}", tmp.display()))?;
        f.sync_all()
            .with_context(|| format!("syncing {}", tmp.display()))?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming {} into place", tmp.display()))?;
    Ok(())
}

pub fn read_records(path: &Path) -> anyhow::Result<Vec<RunRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: RunRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}: malformed run record", path.display(), i + 1))?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads a finished upstream stage, refusing records minted under a different
/// fingerprint unless `force` accepts them.
pub fn require_stage(
    dir: &Path,
    stage: &str,
    fingerprint: &str,
    force: bool,
) -> Result<Vec<RunRecord>, CliError> {
    let path = artifact_path(dir, stage);
    if !path.is_file() {
        return Err(CliError::Prerequisite(format!(
            "stage `{stage}` has no artifact at {}; run `awaken-kgqa {stage}` first",
            path.display()
        )));
    }
    let records = read_records(&path).map_err(CliError::Other)?;
    if !force {
        if let Some(r) = records.iter().find(|r| r.fingerprint != fingerprint) {
            return Err(CliError::Prerequisite(format!(
                "{} was produced under fingerprint {} but the current config is {}; \
                 rerun `{stage}` or pass --force to accept it",
                path.display(),
                r.fingerprint,
                fingerprint
            )));
        }
    }
    Ok(records)
}
