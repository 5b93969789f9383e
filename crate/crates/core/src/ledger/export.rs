//! Verification of NDJSON ledger exports.
//!
//! Verification works on the generic JSON form of each line, so it detects
//! tampering even when the edited payload no longer matches any known event
//! schema.

use std::io::BufRead;

use serde::Serialize;
use serde_json::Value;

use super::encoding::{chain_hash, Digest};

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("reading ledger export: {0}")]
    Io(#[from] std::io::Error),
    #[error("ledger export is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum VerifyStatus {
    Ok,
    Mismatch { seq: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub status: VerifyStatus,
    /// Number of lines whose hash checked out.
    pub verified: u64,
    /// Hash of the last verified line.
    pub head: Digest,
    /// The final line was cut short mid-record and was ignored.
    pub truncated_tail: bool,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.status == VerifyStatus::Ok
    }
}

struct Line {
    seq: u64,
    tick: u64,
    kind: String,
    payload: Value,
    hash: Digest,
}

fn parse_line(text: &str) -> Result<Line, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| format!("malformed record: {e}"))?;
    let obj = value.as_object().ok_or("record is not an object")?;
    let seq = obj.get("seq").and_then(Value::as_u64).ok_or("missing seq")?;
    let tick = obj.get("tick").and_then(Value::as_u64).ok_or("missing tick")?;
    let kind = obj.get("kind").and_then(Value::as_str).ok_or("missing kind")?.to_owned();
    let payload = obj.get("payload").cloned().ok_or("missing payload")?;
    let hash = obj
        .get("hash")
        .and_then(Value::as_str)
        .ok_or("missing hash")
        .and_then(|h| Digest::from_hex(h).map_err(|_| "hash is not 32-byte hex"))?;
    Ok(Line { seq, tick, kind, payload, hash })
}

/// Recomputes the hash chain of an export. Reports the first line that does
/// not match; a final line truncated mid-record is tolerated and flagged.
pub fn verify_export<R: BufRead>(reader: R) -> Result<VerifyReport, ExportError> {
    let mut lines: Vec<String> = Vec::new();
    for line in reader.split(b'\n') {
        let bytes = line?;
        lines.push(String::from_utf8_lossy(&bytes).into_owned());
    }
    // `split` yields a trailing empty chunk only when input ends with '\n'.
    let ends_clean = lines.last().is_some_and(String::is_empty);
    if ends_clean {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(ExportError::Empty);
    }

    let mut prev = Digest::ZERO;
    let last = lines.len() - 1;
    for (i, text) in lines.iter().enumerate() {
        let expected_seq = i as u64;
        let line = match parse_line(text) {
            Ok(line) => line,
            Err(_) if i == last && !ends_clean => {
                return Ok(VerifyReport {
                    status: VerifyStatus::Ok,
                    verified: expected_seq,
                    head: prev,
                    truncated_tail: true,
                });
            }
            Err(reason) => {
                return Ok(mismatch(expected_seq, reason, prev));
            }
        };
        if line.seq != expected_seq {
            let reason = format!("sequence gap: found {} expected {expected_seq}", line.seq);
            return Ok(mismatch(expected_seq, reason, prev));
        }
        let recomputed = chain_hash(&prev, line.seq, line.tick, &line.kind, &line.payload);
        if recomputed != line.hash {
            return Ok(mismatch(expected_seq, "hash does not match contents".into(), prev));
        }
        prev = line.hash;
    }
    Ok(VerifyReport {
        status: VerifyStatus::Ok,
        verified: lines.len() as u64,
        head: prev,
        truncated_tail: false,
    })
}

fn mismatch(seq: u64, reason: String, prev: Digest) -> VerifyReport {
    VerifyReport {
        status: VerifyStatus::Mismatch { seq, reason },
        verified: seq,
        head: prev,
        truncated_tail: false,
    }
}
