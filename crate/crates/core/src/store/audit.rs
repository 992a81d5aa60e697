//! Append-only audit log, one JSON event per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::Utc;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StoreError;
use crate::protocol::{replay, Command, ReviewSession, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub sequence: u64,
    pub actor: String,
    pub action: String,
    /// SHA-256 of the command's canonical JSON.
    pub digest: String,
    pub timestamp: Timestamp,
    pub command: Command,
}

pub fn command_digest(command: &Command) -> String {
    let value = serde_json::to_value(command).expect("commands serialize");
    let bytes = serde_json::to_vec(&value).expect("values serialize");
    hex::encode(Sha256::digest(&bytes))
}

impl AuditEvent {
    pub fn new(sequence: u64, actor: &str, command: Command) -> Self {
        Self {
            sequence,
            actor: actor.to_string(),
            action: command.name().to_string(),
            digest: command_digest(&command),
            timestamp: Utc::now(),
            command,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuditLog {
    path: PathBuf,
}

impl AuditLog {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Read and verify every event: sequence numbers must run 1, 2, 3, ...
    /// and each digest must match its command.
    pub fn read(&self) -> Result<Vec<AuditEvent>, StoreError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(StoreError::io(&self.path, e)),
        };
        let mut events = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| StoreError::io(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: AuditEvent = serde_json::from_str(&line)
                .map_err(|e| StoreError::AuditMismatch(format!("line {}: {e}", i + 1)))?;
            let expected = events.len() as u64 + 1;
            if event.sequence != expected {
                return Err(StoreError::AuditMismatch(format!(
                    "expected sequence {expected}, found {}",
                    event.sequence
                )));
            }
            if event.digest != command_digest(&event.command) {
                return Err(StoreError::AuditMismatch(format!(
                    "digest mismatch at sequence {}",
                    event.sequence
                )));
            }
            events.push(event);
        }
        Ok(events)
    }

    /// Next sequence number to use.
    pub fn next_sequence(&self) -> Result<u64, StoreError> {
        Ok(self.read()?.len() as u64 + 1)
    }

    /// Append events with a single write, then sync.
    pub fn append(&self, events: &[AuditEvent]) -> Result<(), StoreError> {
        let mut buf = Vec::new();
        for e in events {
            serde_json::to_writer(&mut buf, e).expect("events serialize");
            buf.push(b'\n');
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| StoreError::io(&self.path, e))?;
        file.write_all(&buf)
            .and_then(|()| file.sync_data())
            .map_err(|e| StoreError::io(&self.path, e))
    }

    /// Fold the log from nothing.
    pub fn replay(&self) -> Result<ReviewSession, StoreError> {
        let events = self.read()?;
        Ok(replay(events.iter().map(|e| &e.command))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let log = AuditLog::new(dir.path().join("a.jsonl"));
        assert!(log.read().unwrap().is_empty());
        log.append(&[AuditEvent::new(1, "x", Command::SampleBatch)]).unwrap();
        log.append(&[AuditEvent::new(2, "y", Command::CloseRound { round: 1 })])
            .unwrap();
        let events = log.read().unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[1].action, "close_round");
        assert_eq!(log.next_sequence().unwrap(), 3);
    }

    #[test]
    fn gaps_and_tampering_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        let log = AuditLog::new(dir.path().join("a.jsonl"));
        log.append(&[AuditEvent::new(2, "x", Command::SampleBatch)]).unwrap();
        assert!(matches!(log.read(), Err(StoreError::AuditMismatch(_))));

        let log = AuditLog::new(dir.path().join("b.jsonl"));
        let mut event = AuditEvent::new(1, "x", Command::CloseRound { round: 1 });
        event.command = Command::CloseRound { round: 2 };
        log.append(&[event]).unwrap();
        assert!(matches!(log.read(), Err(StoreError::AuditMismatch(_))));
    }
}
