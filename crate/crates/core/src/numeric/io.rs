use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::ParameterStore;
use super::tensor::Tensor;
use super::NumericError;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    tensors: Vec<CheckpointTensor>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    shape: Vec<usize>,
    frozen: bool,
    data: Vec<f64>,
}

pub fn save_checkpoint(store: &ParameterStore, path: &Path) -> Result<(), NumericError> {
    let file = CheckpointFile {
        format_version: CHECKPOINT_FORMAT_VERSION,
        tensors: store
            .iter()
            .map(|(name, p)| CheckpointTensor {
                name: name.to_string(),
                shape: p.value.shape().to_vec(),
                frozen: p.frozen,
                data: p.value.data().to_vec(),
            })
            .collect(),
    };
    let text = serde_json::to_string(&file).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParameterStore, NumericError> {
    let text = fs::read_to_string(path)?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| NumericError::Checkpoint(e.to_string()))?;
    if file.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(NumericError::Checkpoint(format!(
            "unsupported format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
            file.format_version
        )));
    }
    let mut store = ParameterStore::new();
    for t in file.tensors {
        let value =
            Tensor::new(t.shape, t.data).map_err(|e| NumericError::Checkpoint(format!("tensor `{}`: {e}", t.name)))?;
        store.insert_with(t.name, value, t.frozen);
    }
    Ok(store)
}

/// Reads an embedding file: one entry per line, an identifier followed by
/// reals. When a line contains a tab the identifier is everything before the
/// first tab (so it may contain spaces); otherwise it is the first
/// whitespace-separated token. Vectors are truncated or zero-padded to `dim`.
pub fn load_embeddings(path: &Path, dim: usize) -> Result<BTreeMap<String, Vec<f64>>, NumericError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (ident, rest) = match trimmed.split_once('\t') {
            Some((id, rest)) => (id, rest),
            None => trimmed.split_once(char::is_whitespace).unwrap_or((trimmed, "")),
        };
        let ident = ident.trim();
        if ident.is_empty() {
            return Err(NumericError::EmbeddingParse {
                line: lineno + 1,
                detail: "empty identifier".into(),
            });
        }
        let mut values = Vec::with_capacity(dim);
        for tok in rest.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| NumericError::EmbeddingParse {
                line: lineno + 1,
                detail: format!("`{tok}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(NumericError::EmbeddingParse {
                    line: lineno + 1,
                    detail: format!("non-finite value `{tok}`"),
                });
            }
            values.push(v);
        }
        values.resize(dim, 0.0);
        out.insert(ident.to_string(), values);
    }
    Ok(out)
}
