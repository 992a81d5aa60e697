//! Persistence: catalog files, session documents, round reports and the
//! audit log, plus [`SessionStore`] which ties them together on disk.

pub mod audit;
pub mod catalog;
pub mod document;
pub mod report;

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::protocol::{Command, Outcome, ProtocolError, ReviewSession};
use audit::{AuditEvent, AuditLog};

pub use catalog::{import_catalog, normalize_title, read_catalog, write_catalog, Catalog, DedupReport};
pub use document::{canonical_json, load_session, save_session, SCHEMA_VERSION};
pub use report::{export_round_report, RoundReportDoc};

/// Relative session paths are resolved against this directory when set.
pub const DATA_DIR_ENV: &str = "KAPPAGATE_DATA_DIR";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("schema version {found} is not supported (this build reads up to {supported})")]
    SchemaMismatch { found: u64, supported: u64 },
    #[error("corrupt session document: {0}")]
    CorruptDocument(String),
    #[error("audit log does not match: {0}")]
    AuditMismatch(String),
    #[error("round {0} is not closed")]
    RoundNotClosed(u32),
    #[error("session revision is {actual}, request was based on {expected}")]
    StaleRevision { expected: u64, actual: u64 },
    #[error("{0} already exists")]
    AlreadyExists(PathBuf),
    #[error("no session at {0}")]
    NotFound(PathBuf),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

impl StoreError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Whether the caller can fix this (bad input, wrong state) as opposed to
    /// a damaged or unreadable store.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self,
            StoreError::Io { .. }
                | StoreError::SchemaMismatch { .. }
                | StoreError::CorruptDocument(_)
                | StoreError::AuditMismatch(_)
        )
    }
}

/// Resolve `path` against the data directory override, if any.
pub fn resolve_path(path: impl AsRef<Path>) -> PathBuf {
    let path = path.as_ref();
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) if path.is_relative() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// A session document on disk with its audit log (`<path>.audit.jsonl`)
/// and lock file (`<path>.lock`).
///
/// Mutations hold an exclusive lock, apply every command to an in-memory
/// copy, append the commands to the audit log, and then atomically replace
/// the document. A failing command leaves both files untouched.
#[derive(Debug, Clone)]
pub struct SessionStore {
    path: PathBuf,
}

struct Lock(File);

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

impl SessionStore {
    /// Store at exactly `path`.
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    /// Store at `path`, resolved against the data directory override.
    pub fn open(path: impl AsRef<Path>) -> Self {
        Self::new(resolve_path(path))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn audit_log(&self) -> AuditLog {
        AuditLog::new(sibling(&self.path, ".audit.jsonl"))
    }

    pub fn exists(&self) -> bool {
        self.path.exists()
    }

    fn lock(&self) -> Result<Lock, StoreError> {
        let path = sibling(&self.path, ".lock");
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| StoreError::io(parent, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| StoreError::io(&path, e))?;
        file.lock().map_err(|e| StoreError::io(&path, e))?;
        Ok(Lock(file))
    }

    pub fn load(&self) -> Result<ReviewSession, StoreError> {
        let text = fs::read_to_string(&self.path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                StoreError::NotFound(self.path.clone())
            } else {
                StoreError::io(&self.path, e)
            }
        })?;
        load_session(&text)
    }

    /// The committed document text.
    pub fn document(&self) -> Result<String, StoreError> {
        fs::read_to_string(&self.path).map_err(|e| StoreError::io(&self.path, e))
    }

    fn write_document(&self, session: &ReviewSession) -> Result<(), StoreError> {
        let tmp = sibling(&self.path, ".tmp");
        let mut file = File::create(&tmp).map_err(|e| StoreError::io(&tmp, e))?;
        file.write_all(save_session(session).as_bytes())
            .and_then(|()| file.sync_all())
            .map_err(|e| StoreError::io(&tmp, e))?;
        fs::rename(&tmp, &self.path).map_err(|e| StoreError::io(&self.path, e))
    }

    /// Create the session from a `CreateSession` command.
    pub fn create(&self, actor: &str, command: Command) -> Result<ReviewSession, StoreError> {
        let _lock = self.lock()?;
        if self.exists() {
            return Err(StoreError::AlreadyExists(self.path.clone()));
        }
        let session = command.create()?;
        let log = self.audit_log();
        if !log.read()?.is_empty() {
            return Err(StoreError::AlreadyExists(log.path().to_path_buf()));
        }
        log.append(&[AuditEvent::new(1, actor, command)])?;
        self.write_document(&session)?;
        Ok(session)
    }

    /// Apply `commands` atomically: all of them, or none.
    ///
    /// With `expected_revision`, the call fails with
    /// [`StoreError::StaleRevision`] unless the stored session is at exactly
    /// that revision.
    pub fn execute(
        &self,
        actor: &str,
        commands: Vec<Command>,
        expected_revision: Option<u64>,
    ) -> Result<(ReviewSession, Vec<Outcome>), StoreError> {
        let _lock = self.lock()?;
        let mut session = self.load()?;
        if let Some(expected) = expected_revision {
            if expected != session.revision() {
                return Err(StoreError::StaleRevision {
                    expected,
                    actual: session.revision(),
                });
            }
        }
        let mut outcomes = Vec::with_capacity(commands.len());
        for cmd in &commands {
            outcomes.push(cmd.apply(&mut session)?);
        }
        if commands.is_empty() {
            return Ok((session, outcomes));
        }
        let log = self.audit_log();
        let first = log.next_sequence()?;
        let events: Vec<AuditEvent> = commands
            .into_iter()
            .enumerate()
            .map(|(i, cmd)| AuditEvent::new(first + i as u64, actor, cmd))
            .collect();
        log.append(&events)?;
        self.write_document(&session)?;
        Ok((session, outcomes))
    }

    /// Replay the audit log and check it reproduces the stored document.
    pub fn verify(&self) -> Result<ReviewSession, StoreError> {
        let replayed = self.audit_log().replay()?;
        let stored = self.load()?;
        if save_session(&replayed) != save_session(&stored) {
            return Err(StoreError::AuditMismatch(
                "replaying the audit log does not reproduce the stored session".into(),
            ));
        }
        Ok(stored)
    }
}
