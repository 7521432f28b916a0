//! JSONL persistence: one JSON object per line, append-friendly and diffable.
//! Every database in the pipeline round-trips through this module.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed line {line} in {path}: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> JsonlError {
    JsonlError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write records as JSONL, returning the number written.
pub fn write_jsonl<T, I>(path: &Path, records: I) -> Result<usize, JsonlError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut writer = BufWriter::new(file);
    let mut count = 0usize;
    for record in records {
        let line = serde_json::to_string(&record).map_err(|e| JsonlError::Malformed {
            path: path.to_path_buf(),
            line: count + 1,
            source: e,
        })?;
        writer.write_all(line.as_bytes()).map_err(|e| io_err(path, e))?;
        writer.write_all(b"\n").map_err(|e| io_err(path, e))?;
        count += 1;
    }
    writer.flush().map_err(|e| io_err(path, e))?;
    Ok(count)
}

/// Read a whole JSONL file. Blank lines are skipped; a malformed line
/// surfaces its 1-based line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| JsonlError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            source: e,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Serialize records to an in-memory JSONL byte buffer. Used for digests and
/// byte-level reproducibility checks.
pub fn to_jsonl_bytes<T, I>(records: I) -> Result<Vec<u8>, serde_json::Error>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut buf = Vec::new();
    for record in records {
        let line = serde_json::to_string(&record)?;
        buf.extend_from_slice(line.as_bytes());
        buf.push(b'\n');
    }
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ProvenanceRecord, RecordOrigin, Timestamp};

    fn sample_record(n: u32) -> ProvenanceRecord {
        ProvenanceRecord {
            sid: format!("id-{n}"),
            stype: Some("process".to_string()),
            sname: Some(format!("/usr/bin/tool{n}")),
            did: format!("id-{}", n + 1),
            dtype: None,
            dname: None,
            itype: "read".to_string(),
            time: Some(Timestamp::unparsed("t1")),
            origin: RecordOrigin::Cpe,
            source_log_id: format!("L{n}"),
        }
    }

    #[test]
    fn empty_write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        let count = write_jsonl::<ProvenanceRecord, _>(&path, Vec::new()).unwrap();
        assert_eq!(count, 0);
        let back: Vec<ProvenanceRecord> = read_jsonl(&path).unwrap();
        assert!(back.is_empty());
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let records: Vec<ProvenanceRecord> = (0..3).map(sample_record).collect();
        assert_eq!(write_jsonl(&path, records.iter()).unwrap(), 3);
        let back: Vec<ProvenanceRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn corrupt_line_names_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corrupt.jsonl");
        let mut lines: Vec<String> = (0..5)
            .map(|n| serde_json::to_string(&sample_record(n)).unwrap())
            .collect();
        lines[2] = "{not json".to_string();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = read_jsonl::<ProvenanceRecord>(&path).unwrap_err();
        match err {
            JsonlError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
