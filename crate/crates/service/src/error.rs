use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use kappagate_core::protocol::ProtocolError;
use kappagate_core::store::StoreError;
use kappagate_core::timing::TimeModelError;
use serde_json::json;

/// Error response: status plus a `{"error": code, "message": text}` body.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn unauthorized() -> Self {
        Self::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown bearer token")
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

/// Status for a protocol error. Conflicts with state another request already
/// changed are 409; blinding and identity problems are 403.
pub fn protocol_status(e: &ProtocolError) -> StatusCode {
    use ProtocolError::*;
    match e {
        Blinded(_) | NotAReviewer(_) | NotYourPartition { .. } => StatusCode::FORBIDDEN,
        UnknownRound(_) => StatusCode::NOT_FOUND,
        RoundAlreadyOpen(_)
        | RoundClosed(_)
        | DuplicateDecision { .. }
        | AlreadyPartitioned
        | AlreadyDecided(_)
        | StaleRound(_) => StatusCode::CONFLICT,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<ProtocolError> for ApiError {
    fn from(e: ProtocolError) -> Self {
        Self::new(protocol_status(&e), e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::Protocol(p) => p.into(),
            StoreError::NotFound(_) => Self::new(StatusCode::NOT_FOUND, "session_not_found", message),
            StoreError::AlreadyExists(_) => Self::new(StatusCode::CONFLICT, "session_exists", message),
            StoreError::StaleRevision { .. } => Self::new(StatusCode::CONFLICT, "stale_revision", message),
            StoreError::RoundNotClosed(_) => Self::new(StatusCode::FORBIDDEN, "round_not_closed", message),
            StoreError::Parse { .. } => Self::bad_request("parse_error", message),
            StoreError::MissingColumn(_) => Self::bad_request("missing_column", message),
            StoreError::SchemaMismatch { .. } => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "schema_mismatch", message)
            }
            StoreError::CorruptDocument(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "corrupt_document", message)
            }
            StoreError::AuditMismatch(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "audit_mismatch", message)
            }
            StoreError::Io { .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "io_error", message),
        }
    }
}

impl From<TimeModelError> for ApiError {
    fn from(e: TimeModelError) -> Self {
        let code = match e {
            TimeModelError::Domain(_) => "domain",
            TimeModelError::InvalidRange(_) => "invalid_range",
            TimeModelError::MissingTimings(_) => "missing_timings",
            TimeModelError::Incomplete => "session_incomplete",
            TimeModelError::InvalidDuration(_) => "invalid_duration",
        };
        Self::bad_request(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}
