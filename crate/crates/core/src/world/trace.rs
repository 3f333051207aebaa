//! Golden episode traces as JSONL, one record per tick.

use super::WorldError;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u32,
    pub action: String,
    pub reward: f64,
    pub health: f64,
    pub entity_count: usize,
}

pub fn write_trace(path: &Path, records: &[TraceRecord]) -> Result<(), WorldError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r).expect("trace record serializes");
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>, WorldError> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line).map_err(|e| WorldError::ConfigParse {
            line: i + 1,
            msg: format!("bad trace record: {e}"),
        })?;
        out.push(rec);
    }
    Ok(out)
}
