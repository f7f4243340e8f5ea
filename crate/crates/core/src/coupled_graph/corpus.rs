//! Line-delimited corpus files and their manifests.
//!
//! A corpus is one JSON record per line, fields exactly as in
//! [`CoupledInstance`]. The manifest lists every instance id with the SHA-256
//! of its record line plus the scene relation histogram.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::stats::relation_histogram;
use super::CoupledInstance;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("PARSE_ERROR at record {record} (line {line}): {detail}")]
    Parse { record: usize, line: usize, detail: String },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn encode(instance: &CoupledInstance) -> Result<String, CorpusError> {
    serde_json::to_string(instance).map_err(|e| CorpusError::Serialize(e.to_string()))
}

pub fn save_corpus(instances: &[CoupledInstance], path: &Path) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for inst in instances {
        out.write_all(encode(inst)?.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Loads every record. Blank lines are skipped; record indices count
/// non-blank lines from zero.
pub fn load_corpus(path: &Path) -> Result<Vec<CoupledInstance>, CorpusError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = out.len();
        let inst: CoupledInstance = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            record,
            line: lineno + 1,
            detail: e.to_string(),
        })?;
        out.push(inst);
    }
    Ok(out)
}

pub fn record_checksum(instance: &CoupledInstance) -> Result<String, CorpusError> {
    let line = encode(instance)?;
    Ok(hex::encode(Sha256::digest(line.as_bytes())))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub instances: Vec<ManifestEntry>,
    /// Scene-graph triple counts per relation, in vocabulary order.
    pub relation_counts: Vec<(String, usize)>,
}

impl Manifest {
    pub fn build(instances: &[CoupledInstance]) -> Result<Self, CorpusError> {
        let entries = instances
            .iter()
            .map(|i| {
                Ok(ManifestEntry {
                    id: i.id.clone(),
                    sha256: record_checksum(i)?,
                })
            })
            .collect::<Result<Vec<_>, CorpusError>>()?;
        Ok(Manifest {
            instances: entries,
            relation_counts: relation_histogram(instances).counts,
        })
    }
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), CorpusError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CorpusError::Serialize(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Manifest, CorpusError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Parse {
        record: 0,
        line: e.line(),
        detail: e.to_string(),
    })
}

/// Checks ids, checksums and relation counts of `instances` against a manifest.
pub fn verify_manifest(instances: &[CoupledInstance], manifest: &Manifest) -> Result<(), CorpusError> {
    if instances.len() != manifest.instances.len() {
        return Err(CorpusError::ManifestMismatch(format!(
            "{} instances, manifest lists {}",
            instances.len(),
            manifest.instances.len()
        )));
    }
    for (i, (inst, entry)) in instances.iter().zip(&manifest.instances).enumerate() {
        if inst.id != entry.id {
            return Err(CorpusError::ManifestMismatch(format!(
                "record {i}: id `{}`, manifest `{}`",
                inst.id, entry.id
            )));
        }
        let sum = record_checksum(inst)?;
        if sum != entry.sha256 {
            return Err(CorpusError::ManifestMismatch(format!(
                "record {i} (`{}`): checksum differs",
                inst.id
            )));
        }
    }
    let counts = relation_histogram(instances).counts;
    if counts != manifest.relation_counts {
        return Err(CorpusError::ManifestMismatch(format!(
            "relation counts {counts:?} vs manifest {:?}",
            manifest.relation_counts
        )));
    }
    Ok(())
}
