//! Canonical session documents.
//!
//! A document is pretty-printed JSON with keys sorted at every level, so the
//! same session always serializes to the same bytes. `schema_version` sorts
//! ahead of `session` and is therefore the first field in the file.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::StoreError;
use crate::protocol::ReviewSession;

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct SessionDocument {
    schema_version: u64,
    session: ReviewSession,
}

/// Serialize any value with sorted keys.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // `Value` objects are BTreeMap-backed, which sorts keys.
    let value = serde_json::to_value(value).expect("session types serialize to JSON");
    let mut out = serde_json::to_string_pretty(&value).expect("values serialize");
    out.push('\n');
    out
}

pub fn save_session(session: &ReviewSession) -> String {
    canonical_json(&SessionDocument {
        schema_version: SCHEMA_VERSION,
        session: session.clone(),
    })
}

pub fn load_session(text: &str) -> Result<ReviewSession, StoreError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| StoreError::CorruptDocument(e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| StoreError::CorruptDocument("missing schema_version".into()))?;
    let value = migrate(version, value)?;
    let doc: SessionDocument =
        serde_json::from_value(value).map_err(|e| StoreError::CorruptDocument(e.to_string()))?;
    Ok(doc.session)
}

/// Bring an older document up to the current schema.
fn migrate(version: u64, value: Value) -> Result<Value, StoreError> {
    match version {
        SCHEMA_VERSION => Ok(value),
        found => Err(StoreError::SchemaMismatch {
            found,
            supported: SCHEMA_VERSION,
        }),
    }
}
