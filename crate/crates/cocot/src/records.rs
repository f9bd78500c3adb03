//! Canonical line-delimited record format.
//!
//! One JSON object per line, UTF-8, keys in struct declaration order,
//! floats rendered with at most six decimals. Golden tests pin the exact
//! bytes; see `docs/FORMATS.md` for the documented schemas.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::{ReasoningChain, Sample};

/// Round to six decimal places, half away from zero.
pub fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Serialize a float rounded to six decimals so encoded lines stay short
/// and byte-stable.
pub fn ser_f6<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round6(*v))
}

/// Encode one record as its canonical line (no trailing newline).
pub fn to_line<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string(value)?)
}

/// Read every record from a JSONL file. Blank lines are skipped; malformed
/// lines fail the read with the line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)
        .map_err(|e| Error::Usage(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| {
            Error::Usage(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Write records as one canonical line each, replacing any existing file.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Append records to an existing file (creating it when absent).
pub fn append_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read sample records, enforcing sample_id uniqueness within the file.
pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let samples: Vec<Sample> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for s in &samples {
        if !seen.insert(s.sample_id.as_str()) {
            return Err(Error::Usage(format!(
                "{}: duplicate sample_id `{}`",
                path.display(),
                s.sample_id
            )));
        }
    }
    Ok(samples)
}

/// A grounded sample carrying its finished reasoning chain, the record the
/// emitter and evaluation stages consume.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainedRecord {
    pub sample: Sample,
    pub regions: Vec<crate::types::Region>,
    pub keywords: Vec<String>,
    /// Per-region relation-to-question annotations, present only when the
    /// grounding stage produced them; consumed by the replaced_rar strategy.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_relations: Option<Vec<String>>,
    pub chain: ReasoningChain,
    pub truncated: bool,
    pub chain_text: String,
}

/// A sample that fell out of a stage, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub sample_id: String,
    pub stage: String,
    pub reason: String,
}
