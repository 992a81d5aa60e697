//! Routes under `/v1/`.
//!
//! Every request carries `Authorization: Bearer <token>`. Mutations accept an
//! optional `?revision=N`; when present the request fails with 409 unless the
//! session is at exactly that revision. Mutations on one session run one at a
//! time; reads load the last committed document without waiting.

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use kappagate_core::agreement::{AgreementReport, DisplayStats, Verdict};
use kappagate_core::protocol::{
    Command, CriteriaRevision, CriterionRef, DecisionInput, DisagreementPolicy, Outcome, Phase,
    Resolution, ResolveInput, ReviewSession, RoundStatus, SessionConfig, SessionSummary, Study,
    Timestamp, TimingEntry,
};
use kappagate_core::store::{export_round_report, import_catalog, save_session, DedupReport, SessionStore};
use kappagate_core::timing::{fit_model, projection_curve, TimeModel};

use crate::config::{Principal, Role, ServiceConfig};
use crate::error::ApiError;

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

struct Inner {
    data_dir: PathBuf,
    tokens: BTreeMap<String, Principal>,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>, tokens: BTreeMap<String, Principal>) -> Self {
        Self {
            inner: Arc::new(Inner {
                data_dir: data_dir.into(),
                tokens,
                locks: Mutex::default(),
            }),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Self {
        Self::new(&config.data_dir, config.tokens.clone())
    }

    /// Document path for a session id.
    pub fn session_path(&self, id: &str) -> Result<PathBuf, ApiError> {
        let valid = !id.is_empty()
            && id.len() <= 64
            && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(ApiError::bad_request(
                "invalid_session_id",
                "session ids use letters, digits, '-' and '_' (at most 64)",
            ));
        }
        Ok(self.inner.data_dir.join(format!("{id}.json")))
    }

    fn store(&self, id: &str) -> Result<SessionStore, ApiError> {
        self.session_path(id).map(SessionStore::new)
    }

    fn lock_for(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut locks = self.inner.locks.lock().expect("lock table poisoned");
        locks.entry(id.to_string()).or_default().clone()
    }

    fn load(&self, id: &str) -> Result<ReviewSession, ApiError> {
        Ok(self.store(id)?.load()?)
    }

    async fn mutate(
        &self,
        id: &str,
        actor: &Principal,
        revision: Option<u64>,
        commands: Vec<Command>,
    ) -> Result<Mutation, ApiError> {
        let store = self.store(id)?;
        let lock = self.lock_for(id);
        let _guard = lock.lock().await;
        let (session, outcomes) = store.execute(&actor.actor, commands, revision)?;
        Ok(Mutation {
            revision: session.revision(),
            phase: session.phase(),
            outcomes,
        })
    }
}

impl FromRequestParts<AppState> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, ApiError> {
        let token = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(ApiError::unauthorized)?;
        state
            .inner
            .tokens
            .get(token.trim())
            .cloned()
            .ok_or_else(ApiError::unauthorized)
    }
}

fn require(principal: &Principal, role: Role) -> Result<(), ApiError> {
    if principal.role != role {
        return Err(ApiError::forbidden(format!(
            "{} may not perform this action as a {:?}",
            principal.actor, principal.role
        )));
    }
    Ok(())
}

/// JSON body whose rejections become 400 responses.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|e| ApiError::bad_request("invalid_payload", e.body_text()))
    }
}

/// Optional `?revision=N` for optimistic concurrency.
#[derive(Debug, Default, Deserialize)]
pub struct Expect {
    pub revision: Option<u64>,
}

pub struct Revision(pub Option<u64>);

impl<S: Send + Sync> FromRequestParts<S> for Revision {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, ApiError> {
        Query::<Expect>::try_from_uri(&parts.uri)
            .map(|Query(e)| Revision(e.revision))
            .map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Mutation {
    pub revision: u64,
    pub phase: Phase,
    pub outcomes: Vec<Outcome>,
}

fn now_or(at: Option<Timestamp>) -> Timestamp {
    at.unwrap_or_else(Utc::now)
}

#[derive(Debug, Deserialize)]
pub struct CreateSessionRequest {
    pub id: String,
    #[serde(default)]
    pub catalog: Option<Vec<Study>>,
    /// Catalog file contents; duplicates are collapsed on import.
    #[serde(default)]
    pub catalog_csv: Option<String>,
    pub reviewers: Vec<String>,
    pub criteria: CriteriaRevision,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub threshold: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub disagreement_policy: Option<DisagreementPolicy>,
    #[serde(default)]
    pub max_rounds_warning: Option<u32>,
    #[serde(default)]
    pub at: Option<Timestamp>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    pub revision: u64,
    pub studies: usize,
    pub seed: u64,
    pub dedup: Option<DedupReport>,
}

async fn create_session(
    State(state): State<AppState>,
    principal: Principal,
    Body(req): Body<CreateSessionRequest>,
) -> Result<(StatusCode, Json<Created>), ApiError> {
    require(&principal, Role::Coordinator)?;
    let store = state.store(&req.id)?;
    let (catalog, dedup) = match (req.catalog, req.catalog_csv) {
        (Some(studies), None) => (studies, None),
        (None, Some(text)) => {
            let (studies, report) = import_catalog(text.as_bytes())?;
            (studies, Some(report))
        }
        _ => {
            return Err(ApiError::bad_request(
                "invalid_payload",
                "give exactly one of `catalog` and `catalog_csv`",
            ))
        }
    };
    let at = now_or(req.at);
    let defaults = SessionConfig::default();
    let config = SessionConfig {
        batch_size: req.batch_size.unwrap_or(defaults.batch_size),
        threshold: req.threshold.unwrap_or(defaults.threshold),
        seed: req.seed.unwrap_or_else(|| SessionConfig::seed_for(at)),
        disagreement_policy: req.disagreement_policy.unwrap_or_default(),
        max_rounds_warning: req.max_rounds_warning.unwrap_or(defaults.max_rounds_warning),
    };
    let seed = config.seed;
    let command = Command::CreateSession {
        catalog,
        reviewers: req.reviewers,
        criteria: req.criteria,
        config,
        at,
    };
    let lock = state.lock_for(&req.id);
    let _guard = lock.lock().await;
    let session = store.create(&principal.actor, command)?;
    Ok((
        StatusCode::CREATED,
        Json(Created {
            id: req.id,
            revision: session.revision(),
            studies: session.studies().len(),
            seed,
            dedup,
        }),
    ))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RoundInfo {
    pub index: u32,
    pub status: RoundStatus,
    pub criteria_version: u32,
    pub gate_passed: Option<bool>,
    pub finalized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: String,
    pub revision: u64,
    pub phase: Phase,
    pub reviewers: Vec<String>,
    pub config: SessionConfig,
    pub criteria_version: u32,
    pub rounds: Vec<RoundInfo>,
    pub summary: SessionSummary,
}

async fn get_session(
    State(state): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
) -> Result<Json<SessionInfo>, ApiError> {
    let s = state.load(&id)?;
    Ok(Json(SessionInfo {
        id,
        revision: s.revision(),
        phase: s.phase(),
        reviewers: s.reviewers().to_vec(),
        config: s.config().clone(),
        criteria_version: s.current_criteria().version(),
        rounds: s
            .rounds()
            .iter()
            .map(|r| RoundInfo {
                index: r.index,
                status: r.status,
                criteria_version: r.criteria_version,
                gate_passed: r.gate_passed,
                finalized: r.finalized,
            })
            .collect(),
        summary: s.summary(),
    }))
}

/// Full canonical document. Coordinator only, and refused while a round is open.
async fn get_document(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    require(&principal, Role::Coordinator)?;
    let s = state.load(&id)?;
    if let Some(r) = s.rounds().iter().find(|r| r.is_open()) {
        return Err(kappagate_core::protocol::ProtocolError::Blinded(r.index).into());
    }
    Ok(([(CONTENT_TYPE, "application/json")], save_session(&s)).into_response())
}

fn viewer(principal: &Principal) -> Option<&str> {
    (principal.role == Role::Reviewer).then_some(principal.actor.as_str())
}

async fn list_rounds(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let s = state.load(&id)?;
    let views = s
        .rounds()
        .iter()
        .map(|r| s.round_view(r.index, viewer(&principal)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Json(views).into_response())
}

async fn sample_batch(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
    Revision(rev): Revision,
) -> Result<Json<Mutation>, ApiError> {
    require(&principal, Role::Coordinator)?;
    Ok(Json(state.mutate(&id, &principal, rev, vec![Command::SampleBatch]).await?))
}

async fn get_round(
    State(state): State<AppState>,
    principal: Principal,
    Path((id, round)): Path<(String, u32)>,
) -> Result<Response, ApiError> {
    let s = state.load(&id)?;
    Ok(Json(s.round_view(round, viewer(&principal))?).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub study: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub cited: Vec<CriterionRef>,
    #[serde(default)]
    pub time_spent: u32,
    #[serde(default)]
    pub at: Option<Timestamp>,
}

impl DecisionRequest {
    fn into_input(self, reviewer: &str) -> (DecisionInput, Timestamp) {
        (
            DecisionInput {
                reviewer: reviewer.to_string(),
                study: self.study,
                verdict: self.verdict,
                cited: self.cited,
                time_spent: self.time_spent,
            },
            now_or(self.at),
        )
    }
}

async fn record_decision(
    State(state): State<AppState>,
    principal: Principal,
    Path((id, round)): Path<(String, u32)>,
    Revision(rev): Revision,
    Body(req): Body<DecisionRequest>,
) -> Result<Json<Mutation>, ApiError> {
    require(&principal, Role::Reviewer)?;
    let (decision, at) = req.into_input(&principal.actor);
    let cmd = Command::RecordDecision { round, decision, at };
    Ok(Json(state.mutate(&id, &principal, rev, vec![cmd]).await?))
}

async fn close_round(
    State(state): State<AppState>,
    principal: Principal,
    Path((id, round)): Path<(String, u32)>,
    Revision(rev): Revision,
) -> Result<Json<Mutation>, ApiError> {
    require(&principal, Role::Coordinator)?;
    let cmd = Command::CloseRound { round };
    Ok(Json(state.mutate(&id, &principal, rev, vec![cmd]).await?))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ResolveRequest {
    #[serde(default)]
    pub resolutions: Vec<Resolution>,
    /// Revised criteria, if the discussion produced any.
    #[serde(default)]
    pub criteria: Option<CriteriaRevision>,
    #[serde(default)]
    pub note: Option<String>,
    #[serde(default)]
    pub at: Option<Timestamp>,
}

async fn resolve(
    State(state): State<AppState>,
    principal: Principal,
    Path((id, round)): Path<(String, u32)>,
    Revision(rev): Revision,
    Body(req): Body<ResolveRequest>,
) -> Result<Json<Mutation>, ApiError> {
    require(&principal, Role::Coordinator)?;
    let cmd = Command::ResolveAndRefine {
        round,
        resolve: ResolveInput {
            resolutions: req.resolutions,
            revision: req.criteria,
            note: req.note,
        },
        at: now_or(req.at),
    };
    Ok(Json(state.mutate(&id, &principal, rev, vec![cmd]).await?))
}

async fn round_report(
    State(state): State<AppState>,
    _: Principal,
    Path((id, round)): Path<(String, u32)>,
) -> Result<Response, ApiError> {
    let s = state.load(&id)?;
    let text = export_round_report(&s, round)?;
    Ok(([(CONTENT_TYPE, "text/csv; charset=utf-8")], text).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub reviewer: String,
    pub study: String,
    pub verdict: Verdict,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WhatIfResponse {
    pub report: AgreementReport,
    pub display: DisplayStats,
}

async fn what_if(
    State(state): State<AppState>,
    _: Principal,
    Path((id, round)): Path<(String, u32)>,
    Body(req): Body<WhatIfRequest>,
) -> Result<Json<WhatIfResponse>, ApiError> {
    let s = state.load(&id)?;
    let report = s.what_if(round, &req.reviewer, &req.study, req.verdict)?;
    let display = report.display();
    Ok(Json(WhatIfResponse { report, display }))
}

async fn get_criteria(
    State(state): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let s = state.load(&id)?;
    Ok(Json(s.criteria_history()).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviseRequest {
    #[serde(flatten)]
    pub criteria: CriteriaRevision,
    #[serde(default)]
    pub at: Option<Timestamp>,
}

async fn revise_criteria(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
    Revision(rev): Revision,
    Body(req): Body<ReviseRequest>,
) -> Result<Json<Mutation>, ApiError> {
    require(&principal, Role::Coordinator)?;
    let cmd = Command::ReviseCriteria {
        revision: req.criteria,
        at: now_or(req.at),
    };
    Ok(Json(state.mutate(&id, &principal, rev, vec![cmd]).await?))
}

async fn partition(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
    Revision(rev): Revision,
) -> Result<Json<Mutation>, ApiError> {
    require(&principal, Role::Coordinator)?;
    Ok(Json(state.mutate(&id, &principal, rev, vec![Command::PartitionRemaining]).await?))
}

async fn get_partitions(
    State(state): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let s = state.load(&id)?;
    Ok(Json(s.partitions()).into_response())
}

async fn record_phase2(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
    Revision(rev): Revision,
    Body(req): Body<DecisionRequest>,
) -> Result<Json<Mutation>, ApiError> {
    require(&principal, Role::Reviewer)?;
    let (decision, at) = req.into_input(&principal.actor);
    let cmd = Command::RecordPhase2Decision { decision, at };
    Ok(Json(state.mutate(&id, &principal, rev, vec![cmd]).await?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingRequest {
    /// Defaults to the caller. Reviewers may only log their own time.
    #[serde(default)]
    pub actor: Option<String>,
    pub task: String,
    pub phase: u8,
    pub minutes: u32,
}

async fn get_timings(
    State(state): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let s = state.load(&id)?;
    Ok(Json(s.timing_log()).into_response())
}

async fn record_timing(
    State(state): State<AppState>,
    principal: Principal,
    Path(id): Path<String>,
    Revision(rev): Revision,
    Body(req): Body<TimingRequest>,
) -> Result<Json<Mutation>, ApiError> {
    let actor = req.actor.unwrap_or_else(|| principal.actor.clone());
    if principal.role == Role::Reviewer && actor != principal.actor {
        return Err(ApiError::forbidden("reviewers may only log their own time"));
    }
    let cmd = Command::RecordTiming {
        entry: TimingEntry {
            actor,
            task: req.task,
            phase: req.phase,
            minutes: req.minutes,
        },
    };
    Ok(Json(state.mutate(&id, &principal, rev, vec![cmd]).await?))
}

async fn summary(
    State(state): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
) -> Result<Json<SessionSummary>, ApiError> {
    Ok(Json(state.load(&id)?.summary()))
}

async fn savings(
    State(state): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let fitted = fit_model(&state.load(&id)?)?;
    Ok(Json(json!({
        "fitted": fitted,
        "line": fitted.actual.summary_line(),
    }))
    .into_response())
}

#[derive(Debug, Default, Deserialize)]
pub struct ProjectionQuery {
    pub max_studies: Option<f64>,
    pub steps: Option<usize>,
    pub velocity: Option<f64>,
    pub dual_minutes: Option<f64>,
}

/// `ts(S)` curve. Uses the given `velocity`/`dual_minutes`, or the model
/// fitted from the session's time sheet.
async fn projection(
    State(state): State<AppState>,
    _: Principal,
    Path(id): Path<String>,
    Query(q): Query<ProjectionQuery>,
) -> Result<Response, ApiError> {
    let s = state.load(&id)?;
    let model = match (q.velocity, q.dual_minutes) {
        (Some(v), Some(t0)) => TimeModel::new(v, t0)?,
        (None, None) => fit_model(&s)?.model,
        _ => {
            return Err(ApiError::bad_request(
                "invalid_query",
                "give both velocity and dual_minutes, or neither",
            ))
        }
    };
    let max = q.max_studies.unwrap_or(s.studies().len() as f64 * 10.0);
    let curve = projection_curve(&model, max, q.steps.unwrap_or(100))?;
    Ok(Json(curve).into_response())
}

/// HTTP request equivalent to a protocol command.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiRequest {
    pub method: &'static str,
    pub path: String,
    pub body: Option<serde_json::Value>,
    /// Reviewer who must send the request; `None` means a coordinator.
    pub reviewer: Option<String>,
}

/// Map a command onto the route that performs it, so a command history can be
/// sent to the service exactly as a client would.
pub fn request_for(id: &str, command: &Command) -> ApiRequest {
    let base = format!("/v1/sessions/{id}");
    let req = |method, path: String, body: Option<serde_json::Value>| ApiRequest {
        method,
        path,
        body,
        reviewer: None,
    };
    let decision = |d: &DecisionInput, at: &Timestamp| {
        json!({
            "study": d.study,
            "verdict": d.verdict,
            "cited": d.cited,
            "time_spent": d.time_spent,
            "at": at,
        })
    };
    match command {
        Command::CreateSession {
            catalog,
            reviewers,
            criteria,
            config,
            at,
        } => req(
            "POST",
            "/v1/sessions".into(),
            Some(json!({
                "id": id,
                "catalog": catalog,
                "reviewers": reviewers,
                "criteria": criteria,
                "batch_size": config.batch_size,
                "threshold": config.threshold,
                "seed": config.seed,
                "disagreement_policy": config.disagreement_policy,
                "max_rounds_warning": config.max_rounds_warning,
                "at": at,
            })),
        ),
        Command::SampleBatch => req("POST", format!("{base}/rounds"), None),
        Command::RecordDecision {
            round,
            decision: d,
            at,
        } => ApiRequest {
            reviewer: Some(d.reviewer.clone()),
            ..req(
                "POST",
                format!("{base}/rounds/{round}/decisions"),
                Some(decision(d, at)),
            )
        },
        Command::CloseRound { round } => req("POST", format!("{base}/rounds/{round}/close"), None),
        Command::ResolveAndRefine { round, resolve, at } => req(
            "POST",
            format!("{base}/rounds/{round}/resolve"),
            Some(json!({
                "resolutions": resolve.resolutions,
                "criteria": resolve.revision,
                "note": resolve.note,
                "at": at,
            })),
        ),
        Command::ReviseCriteria { revision, at } => req(
            "POST",
            format!("{base}/criteria"),
            Some(json!({
                "inclusion": revision.inclusion,
                "exclusion": revision.exclusion,
                "change_note": revision.change_note,
                "at": at,
            })),
        ),
        Command::PartitionRemaining => req("POST", format!("{base}/partitions"), None),
        Command::RecordPhase2Decision { decision: d, at } => ApiRequest {
            reviewer: Some(d.reviewer.clone()),
            ..req("POST", format!("{base}/phase2/decisions"), Some(decision(d, at)))
        },
        Command::RecordTiming { entry } => req(
            "POST",
            format!("{base}/timings"),
            Some(json!({
                "actor": entry.actor,
                "task": entry.task,
                "phase": entry.phase,
                "minutes": entry.minutes,
            })),
        ),
    }
}

pub fn router(state: AppState) -> Router {
    let session = Router::new()
        .route("/", get(get_session))
        .route("/document", get(get_document))
        .route("/rounds", get(list_rounds).post(sample_batch))
        .route("/rounds/{round}", get(get_round))
        .route("/rounds/{round}/decisions", post(record_decision))
        .route("/rounds/{round}/close", post(close_round))
        .route("/rounds/{round}/resolve", post(resolve))
        .route("/rounds/{round}/report", get(round_report))
        .route("/rounds/{round}/whatif", post(what_if))
        .route("/criteria", get(get_criteria).post(revise_criteria))
        .route("/partitions", get(get_partitions).post(partition))
        .route("/phase2/decisions", post(record_phase2))
        .route("/timings", get(get_timings).post(record_timing))
        .route("/summary", get(summary))
        .route("/savings", get(savings))
        .route("/projection", get(projection));
    Router::new()
        .route("/v1/sessions", post(create_session))
        .nest("/v1/sessions/{id}", session)
        .with_state(state)
}
