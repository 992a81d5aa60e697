//! The two-phase selection protocol.
//!
//! Phase 1 runs dual-review rounds on random batches. After each round the
//! reviewers' kappa is checked against the threshold; below it, the
//! disagreements are discussed and the criteria refined. Once kappa clears
//! the threshold the remaining pool is split between the two reviewers for
//! single review (phase 2).

mod command;
pub mod sampling;
mod session;
mod types;

use thiserror::Error;

pub use command::{replay, Command, Outcome};
pub use session::ReviewSession;
pub use types::*;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("duplicate study id `{0}`")]
    DuplicateStudyId(String),
    #[error("study `{0}` has an empty title")]
    InvalidStudy(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid criteria: {0}")]
    InvalidCriteria(String),
    #[error("operation requires {expected:?}, session is in {actual:?}")]
    WrongPhase { expected: Phase, actual: Phase },
    #[error("round {0} is still open")]
    RoundAlreadyOpen(u32),
    #[error("round {0} is closed but its disagreements are not resolved yet")]
    RoundPendingResolution(u32),
    #[error("no studies left in the pool")]
    PoolExhausted,
    #[error("round {0} does not exist")]
    UnknownRound(u32),
    #[error("round {0} is closed")]
    RoundClosed(u32),
    #[error("round {0} is not closed")]
    RoundNotClosed(u32),
    #[error("round {0} is open; its verdicts stay blinded until it closes")]
    Blinded(u32),
    #[error("study `{0}` is not part of this round or session")]
    UnknownStudy(String),
    #[error("`{0}` is not a reviewer of this session")]
    NotAReviewer(String),
    #[error("{reviewer} already decided study `{study}`")]
    DuplicateDecision { reviewer: String, study: String },
    #[error("an exclude verdict must cite at least one criterion (study `{0}`)")]
    MissingCriterion(String),
    #[error("unknown criterion `{0}`")]
    UnknownCriterion(String),
    #[error("missing decisions: {}", format_pairs(.0))]
    IncompleteDecisions(Vec<(String, String)>),
    #[error("no resolution for disagreed studies: {}", .0.join(", "))]
    UnresolvedDisagreement(Vec<String>),
    #[error("study `{0}` was not a disagreement in this round")]
    UnexpectedResolution(String),
    #[error("round {0} is not the round awaiting resolution")]
    StaleRound(u32),
    #[error("the gate was not passed; supply revised criteria or a discussion note")]
    CriteriaNoteRequired,
    #[error("remaining pool is already partitioned")]
    AlreadyPartitioned,
    #[error("remaining pool has not been partitioned")]
    NotPartitioned,
    #[error("study `{study}` is not in {reviewer}'s partition")]
    NotYourPartition { reviewer: String, study: String },
    #[error("study `{0}` already has a final verdict")]
    AlreadyDecided(String),
    #[error("invalid timing entry: {0}")]
    InvalidTiming(String),
    #[error("the first command must create the session")]
    NotCreated,
}

fn format_pairs(pairs: &[(String, String)]) -> String {
    pairs
        .iter()
        .map(|(r, s)| format!("{r}/{s}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl ProtocolError {
    /// Stable machine-readable reason code.
    pub fn code(&self) -> &'static str {
        use ProtocolError::*;
        match self {
            EmptyCatalog => "empty_catalog",
            DuplicateStudyId(_) => "duplicate_study_id",
            InvalidStudy(_) => "invalid_study",
            InvalidConfig(_) => "invalid_config",
            InvalidCriteria(_) => "invalid_criteria",
            WrongPhase { .. } => "wrong_phase",
            RoundAlreadyOpen(_) => "round_already_open",
            RoundPendingResolution(_) => "round_pending_resolution",
            PoolExhausted => "pool_exhausted",
            UnknownRound(_) => "unknown_round",
            RoundClosed(_) => "round_closed",
            RoundNotClosed(_) => "round_not_closed",
            Blinded(_) => "blinded",
            UnknownStudy(_) => "unknown_study",
            NotAReviewer(_) => "not_a_reviewer",
            DuplicateDecision { .. } => "duplicate_decision",
            MissingCriterion(_) => "missing_criterion",
            UnknownCriterion(_) => "unknown_criterion",
            IncompleteDecisions(_) => "incomplete_decisions",
            UnresolvedDisagreement(_) => "unresolved_disagreement",
            UnexpectedResolution(_) => "unexpected_resolution",
            StaleRound(_) => "stale_round",
            CriteriaNoteRequired => "criteria_note_required",
            AlreadyPartitioned => "already_partitioned",
            NotPartitioned => "not_partitioned",
            NotYourPartition { .. } => "not_your_partition",
            AlreadyDecided(_) => "already_decided",
            InvalidTiming(_) => "invalid_timing",
            NotCreated => "not_created",
        }
    }
}
