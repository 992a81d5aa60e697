//! Serializable session mutations.
//!
//! Every change to a session goes through a [`Command`]. The store appends
//! each applied command to the audit log, so folding the log with [`replay`]
//! rebuilds the session exactly.

use serde::{Deserialize, Serialize};

use super::types::*;
use super::{ProtocolError, ReviewSession};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Command {
    CreateSession {
        catalog: Vec<Study>,
        reviewers: Vec<ReviewerId>,
        criteria: CriteriaRevision,
        config: SessionConfig,
        at: Timestamp,
    },
    SampleBatch,
    RecordDecision {
        round: u32,
        decision: DecisionInput,
        at: Timestamp,
    },
    CloseRound {
        round: u32,
    },
    ResolveAndRefine {
        round: u32,
        resolve: ResolveInput,
        at: Timestamp,
    },
    ReviseCriteria {
        revision: CriteriaRevision,
        at: Timestamp,
    },
    PartitionRemaining,
    RecordPhase2Decision {
        decision: DecisionInput,
        at: Timestamp,
    },
    RecordTiming {
        entry: TimingEntry,
    },
}

/// What a successfully applied command produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Created { studies: usize },
    RoundOpened { round: u32, batch: Vec<StudyId> },
    DecisionRecorded { round: u32, reviewer: ReviewerId, study: StudyId },
    RoundClosed { report: RoundReport },
    Resolved { round: u32, criteria_version: u32 },
    CriteriaRevised { version: u32 },
    Partitioned { partitions: Vec<Partition> },
    Phase2Recorded { study: StudyId, complete: bool },
    TimingRecorded { entries: usize },
}

impl Command {
    /// Operation names, one per variant.
    pub const OPERATIONS: [&'static str; 9] = [
        "create_session",
        "sample_batch",
        "record_decision",
        "close_round",
        "resolve_and_refine",
        "revise_criteria",
        "partition_remaining",
        "record_phase2_decision",
        "record_timing",
    ];

    pub fn name(&self) -> &'static str {
        let i = match self {
            Command::CreateSession { .. } => 0,
            Command::SampleBatch => 1,
            Command::RecordDecision { .. } => 2,
            Command::CloseRound { .. } => 3,
            Command::ResolveAndRefine { .. } => 4,
            Command::ReviseCriteria { .. } => 5,
            Command::PartitionRemaining => 6,
            Command::RecordPhase2Decision { .. } => 7,
            Command::RecordTiming { .. } => 8,
        };
        Self::OPERATIONS[i]
    }

    /// Build a session from a `CreateSession` command.
    pub fn create(&self) -> Result<ReviewSession, ProtocolError> {
        match self {
            Command::CreateSession {
                catalog,
                reviewers,
                criteria,
                config,
                at,
            } => ReviewSession::create(
                catalog.clone(),
                reviewers.clone(),
                criteria.clone(),
                config.clone(),
                *at,
            ),
            _ => Err(ProtocolError::NotCreated),
        }
    }

    /// Apply to an existing session. `CreateSession` is rejected here.
    pub fn apply(&self, session: &mut ReviewSession) -> Result<Outcome, ProtocolError> {
        Ok(match self.clone() {
            Command::CreateSession { .. } => {
                return Err(ProtocolError::InvalidConfig("session already exists".into()))
            }
            Command::SampleBatch => {
                let round = session.sample_batch()?;
                Outcome::RoundOpened {
                    round: round.index,
                    batch: round.batch.clone(),
                }
            }
            Command::RecordDecision { round, decision, at } => {
                let (reviewer, study) = (decision.reviewer.clone(), decision.study.clone());
                session.record_decision(round, decision, at)?;
                Outcome::DecisionRecorded {
                    round,
                    reviewer,
                    study,
                }
            }
            Command::CloseRound { round } => Outcome::RoundClosed {
                report: session.close_round(round)?,
            },
            Command::ResolveAndRefine { round, resolve, at } => {
                session.resolve_and_refine(round, resolve, at)?;
                Outcome::Resolved {
                    round,
                    criteria_version: session.current_criteria().version(),
                }
            }
            Command::ReviseCriteria { revision, at } => Outcome::CriteriaRevised {
                version: session.revise_criteria(revision, at)?,
            },
            Command::PartitionRemaining => Outcome::Partitioned {
                partitions: session.partition_remaining()?.to_vec(),
            },
            Command::RecordPhase2Decision { decision, at } => {
                let study = decision.study.clone();
                let complete = session.record_phase2_decision(decision, at)?;
                Outcome::Phase2Recorded { study, complete }
            }
            Command::RecordTiming { entry } => {
                session.record_timing(entry)?;
                Outcome::TimingRecorded {
                    entries: session.timing_log().len(),
                }
            }
        })
    }
}

/// Rebuild a session from its command history.
pub fn replay<'a, I>(commands: I) -> Result<ReviewSession, ProtocolError>
where
    I: IntoIterator<Item = &'a Command>,
{
    let mut iter = commands.into_iter();
    let mut session = iter.next().ok_or(ProtocolError::NotCreated)?.create()?;
    for cmd in iter {
        cmd.apply(&mut session)?;
    }
    Ok(session)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_complete() {
        let mut names = Command::OPERATIONS.to_vec();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), Command::OPERATIONS.len());
        assert_eq!(Command::SampleBatch.name(), "sample_batch");
        assert_eq!(Command::PartitionRemaining.name(), "partition_remaining");
    }

    #[test]
    fn serde_tag_matches_name() {
        let cmd = Command::CloseRound { round: 2 };
        let v = serde_json::to_value(&cmd).unwrap();
        assert_eq!(v["op"], cmd.name());
        let back: Command = serde_json::from_value(v).unwrap();
        assert_eq!(back, cmd);
    }

    #[test]
    fn replay_needs_create_first() {
        assert_eq!(replay(&[]).unwrap_err(), ProtocolError::NotCreated);
        assert_eq!(
            replay(&[Command::SampleBatch]).unwrap_err(),
            ProtocolError::NotCreated
        );
    }
}
