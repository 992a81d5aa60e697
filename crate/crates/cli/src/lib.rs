//! Offline driver for review sessions.
//!
//! [`run`] parses an argument vector, executes one subcommand against the
//! session store and returns a [`CommandResult`]; the binary only prints it.
//! Exit codes: 0 success, 1 user error, 2 damaged store or internal failure.

mod args;
mod commands;
mod forms;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::{json, Value};

use kappagate_core::store::StoreError;
use kappagate_core::timing::TimeModelError;

pub use args::{Cli, Format};
pub use forms::{parse_selection_form, FormRow, SelectionForm};

/// Protocol operation → subcommand that performs it.
pub const OPERATION_SUBCOMMANDS: [(&str, &str); 9] = [
    ("create_session", "init"),
    ("sample_batch", "sample"),
    ("record_decision", "decide"),
    ("close_round", "close-round"),
    ("resolve_and_refine", "resolve"),
    ("revise_criteria", "criteria revise"),
    ("partition_remaining", "partition"),
    ("record_phase2_decision", "decide2"),
    ("record_timing", "log-time"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub exit_code: i32,
    /// What to print: prose, or JSON with `--format machine`.
    pub text: String,
    pub payload: Option<Value>,
}

#[derive(Debug)]
pub(crate) enum CliError {
    User { code: String, message: String },
    Internal { code: String, message: String },
}

impl CliError {
    pub(crate) fn user(code: &str, message: impl Into<String>) -> Self {
        Self::User {
            code: code.into(),
            message: message.into(),
        }
    }

    fn parts(&self) -> (i32, &str, &str) {
        match self {
            CliError::User { code, message } => (1, code, message),
            CliError::Internal { code, message } => (2, code, message),
        }
    }
}

fn store_code(e: &StoreError) -> String {
    match e {
        StoreError::Protocol(p) => p.code().into(),
        StoreError::Io { .. } => "io_error".into(),
        StoreError::Parse { .. } => "parse_error".into(),
        StoreError::MissingColumn(_) => "missing_column".into(),
        StoreError::SchemaMismatch { .. } => "schema_mismatch".into(),
        StoreError::CorruptDocument(_) => "corrupt_document".into(),
        StoreError::AuditMismatch(_) => "audit_mismatch".into(),
        StoreError::RoundNotClosed(_) => "round_not_closed".into(),
        StoreError::StaleRevision { .. } => "stale_revision".into(),
        StoreError::AlreadyExists(_) => "session_exists".into(),
        StoreError::NotFound(_) => "session_not_found".into(),
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let (code, message) = (store_code(&e), e.to_string());
        if e.is_user_error() {
            CliError::User { code, message }
        } else {
            CliError::Internal { code, message }
        }
    }
}

impl From<kappagate_core::protocol::ProtocolError> for CliError {
    fn from(e: kappagate_core::protocol::ProtocolError) -> Self {
        CliError::user(e.code(), e.to_string())
    }
}

impl From<TimeModelError> for CliError {
    fn from(e: TimeModelError) -> Self {
        CliError::user("time_model", e.to_string())
    }
}

/// Text and payload of a successful subcommand.
pub(crate) struct Output {
    pub text: String,
    pub payload: Value,
}

/// Parse `argv` (including the program name) and run it.
pub fn run<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let ok = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            return CommandResult {
                exit_code: if ok { 0 } else { 1 },
                text: e.render().to_string(),
                payload: None,
            };
        }
    };
    let format = cli.format;
    match commands::dispatch(cli) {
        Ok(out) => CommandResult {
            exit_code: 0,
            text: match format {
                Format::Text => out.text,
                Format::Machine => pretty(&out.payload),
            },
            payload: Some(out.payload),
        },
        Err(e) => {
            let (exit_code, code, message) = e.parts();
            let payload = json!({ "error": code, "message": message });
            CommandResult {
                exit_code,
                text: match format {
                    Format::Text => format!("error: {message}\n"),
                    Format::Machine => pretty(&payload),
                },
                payload: Some(payload),
            }
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}
