use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::Side;

/// Weight given to one edge when its head was updated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub side: Side,
    pub layer: usize,
    pub head: String,
    pub relation: String,
    pub neighbour: String,
    pub alpha: f64,
}

/// Writes one JSON object per line.
pub fn write_trace(path: &Path, records: &[AttentionRecord]) -> io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
