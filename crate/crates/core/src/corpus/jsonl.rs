//! JSONL persistence for case records: one object per line.
//!
//! Schema per line:
//! `{"tokens": [str], "numerals": [{"pos": int, "value": int, "unit": str}],
//!   "collocations": [[int, int]], "labels": {"law": int, ...}}`

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::corpus::CaseRecord;
use crate::error::{Error, Result};

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<CaseRecord>> {
    let file = File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaseRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            detail: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::Schema {
            line: lineno,
            detail: e.to_string(),
        })?;
        records.push(rec);
    }
    Ok(records)
}

pub fn save_jsonl(records: &[CaseRecord], path: impl AsRef<Path>) -> Result<()> {
    let file = File::create(path.as_ref())?;
    let mut writer = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut writer, rec)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}
