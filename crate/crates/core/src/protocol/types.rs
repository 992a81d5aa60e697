use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ProtocolError;
use crate::agreement::{AgreementReport, Verdict};

pub type StudyId = String;
pub type ReviewerId = String;
pub type Timestamp = DateTime<Utc>;

/// One candidate study in the screening pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub id: StudyId,
    pub title: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub year: i32,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
}

impl Study {
    pub fn new(id: impl Into<String>, title: impl Into<String>, source: impl Into<String>, year: i32) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            source: source.into(),
            year,
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CriterionKind {
    Inclusion,
    Exclusion,
}

/// Citation of a single criterion, written `IC2` or `EC3` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CriterionRef {
    pub kind: CriterionKind,
    pub index: u32,
}

impl CriterionRef {
    pub fn inclusion(index: u32) -> Self {
        Self {
            kind: CriterionKind::Inclusion,
            index,
        }
    }

    pub fn exclusion(index: u32) -> Self {
        Self {
            kind: CriterionKind::Exclusion,
            index,
        }
    }

    /// Parse a `;`/`,`/whitespace separated list such as `IC1; EC3`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, ProtocolError> {
        s.split(|c: char| c == ';' || c == ',' || c.is_whitespace())
            .filter(|p| !p.is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn format_list(refs: &[Self]) -> String {
        refs.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
    }
}

impl fmt::Display for CriterionRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let prefix = match self.kind {
            CriterionKind::Inclusion => "IC",
            CriterionKind::Exclusion => "EC",
        };
        write!(f, "{prefix}{}", self.index)
    }
}

impl FromStr for CriterionRef {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        let (kind, rest) = if let Some(rest) = upper.strip_prefix("IC") {
            (CriterionKind::Inclusion, rest)
        } else if let Some(rest) = upper.strip_prefix("EC") {
            (CriterionKind::Exclusion, rest)
        } else {
            return Err(ProtocolError::UnknownCriterion(s.to_string()));
        };
        match rest.parse::<u32>() {
            Ok(index) if index >= 1 => Ok(Self { kind, index }),
            _ => Err(ProtocolError::UnknownCriterion(s.to_string())),
        }
    }
}

impl Serialize for CriterionRef {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CriterionRef {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Proposed inclusion/exclusion criteria, before the session assigns a version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaRevision {
    pub inclusion: Vec<String>,
    pub exclusion: Vec<String>,
    #[serde(default)]
    pub change_note: String,
}

/// A frozen, versioned set of criteria. Only the session creates these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaSet {
    version: u32,
    inclusion: Vec<String>,
    exclusion: Vec<String>,
    change_note: String,
    created_at: Timestamp,
}

impl CriteriaSet {
    pub(crate) fn freeze(version: u32, revision: CriteriaRevision, created_at: Timestamp) -> Self {
        Self {
            version,
            inclusion: revision.inclusion,
            exclusion: revision.exclusion,
            change_note: revision.change_note,
            created_at,
        }
    }

    pub fn version(&self) -> u32 {
        self.version
    }
    pub fn inclusion(&self) -> &[String] {
        &self.inclusion
    }
    pub fn exclusion(&self) -> &[String] {
        &self.exclusion
    }
    pub fn change_note(&self) -> &str {
        &self.change_note
    }
    pub fn created_at(&self) -> Timestamp {
        self.created_at
    }

    pub fn text(&self, r: CriterionRef) -> Option<&str> {
        let list = match r.kind {
            CriterionKind::Inclusion => &self.inclusion,
            CriterionKind::Exclusion => &self.exclusion,
        };
        list.get(r.index as usize - 1).map(String::as_str)
    }

    pub fn contains(&self, r: CriterionRef) -> bool {
        self.text(r).is_some()
    }

    /// Criteria listed with their citation labels.
    pub fn labelled(&self) -> Vec<(CriterionRef, &str)> {
        let inc = self
            .inclusion
            .iter()
            .enumerate()
            .map(|(i, t)| (CriterionRef::inclusion(i as u32 + 1), t.as_str()));
        let exc = self
            .exclusion
            .iter()
            .enumerate()
            .map(|(i, t)| (CriterionRef::exclusion(i as u32 + 1), t.as_str()));
        inc.chain(exc).collect()
    }
}

/// A reviewer's verdict as submitted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionInput {
    pub reviewer: ReviewerId,
    pub study: StudyId,
    pub verdict: Verdict,
    #[serde(default)]
    pub cited: Vec<CriterionRef>,
    /// Self-reported minutes.
    #[serde(default)]
    pub time_spent: u32,
}

/// A stored verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub reviewer: ReviewerId,
    pub study: StudyId,
    pub verdict: Verdict,
    pub cited: Vec<CriterionRef>,
    pub time_spent: u32,
    pub criteria_version: u32,
    pub recorded_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Open,
    Closed,
}

/// Consensus outcome for a study the reviewers disagreed on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub study: StudyId,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
}

/// What the reviewers bring back from the discussion after a round closes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolveInput {
    #[serde(default)]
    pub resolutions: Vec<Resolution>,
    #[serde(default)]
    pub revision: Option<CriteriaRevision>,
    /// Discussion summary; required when the gate failed and the criteria stay unchanged.
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Phase1,
    Phase2,
    Complete,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Phase1 => "phase 1 (dual review)",
            Phase::Phase2 => "phase 2 (split review)",
            Phase::Complete => "complete",
        })
    }
}

/// One dual-review iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub index: u32,
    pub batch: Vec<StudyId>,
    pub criteria_version: u32,
    pub decisions: BTreeMap<ReviewerId, BTreeMap<StudyId, Decision>>,
    pub status: RoundStatus,
    pub report: Option<AgreementReport>,
    pub gate_passed: Option<bool>,
    pub phase_after_close: Option<Phase>,
    pub resolutions: BTreeMap<StudyId, Resolution>,
    pub note: Option<String>,
    pub finalized: bool,
}

impl Round {
    pub fn is_open(&self) -> bool {
        self.status == RoundStatus::Open
    }

    pub fn verdict(&self, reviewer: &str, study: &str) -> Option<Verdict> {
        self.decisions.get(reviewer)?.get(study).map(|d| d.verdict)
    }

    /// Batch studies the two reviewers judged differently, in batch order.
    pub fn disagreements(&self, reviewers: &[ReviewerId]) -> Vec<StudyId> {
        self.batch
            .iter()
            .filter(|s| {
                matches!(
                    (self.verdict(&reviewers[0], s), self.verdict(&reviewers[1], s)),
                    (Some(x), Some(y)) if x != y
                )
            })
            .cloned()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisagreementPolicy {
    #[default]
    ConsensusRequired,
    IncludeOnDisagreement,
}

impl FromStr for DisagreementPolicy {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consensus" | "consensus_required" => Ok(Self::ConsensusRequired),
            "include" | "include_on_disagreement" => Ok(Self::IncludeOnDisagreement),
            other => Err(ProtocolError::InvalidConfig(format!(
                "unknown disagreement policy `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub batch_size: usize,
    pub threshold: f64,
    pub seed: u64,
    pub disagreement_policy: DisagreementPolicy,
    pub max_rounds_warning: u32,
}

impl SessionConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    /// Seed used when the caller gives none: the creation instant in nanoseconds.
    pub fn seed_for(at: Timestamp) -> u64 {
        at.timestamp_nanos_opt().unwrap_or_else(|| at.timestamp()) as u64
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            batch_size: 15,
            threshold: 0.8,
            seed: 0,
            disagreement_policy: DisagreementPolicy::ConsensusRequired,
            max_rounds_warning: 5,
        }
    }
}

/// Where a study's final verdict came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VerdictSource {
    Agreement { round: u32 },
    Resolution { round: u32 },
    SingleReview { reviewer: ReviewerId },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalVerdict {
    pub verdict: Verdict,
    pub source: VerdictSource,
}

/// Studies assigned to one reviewer for single review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub reviewer: ReviewerId,
    pub studies: Vec<StudyId>,
}

/// A line of the time sheet (minutes).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub actor: String,
    pub task: String,
    pub phase: u8,
    pub minutes: u32,
}

/// Result of closing a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub report: AgreementReport,
    pub gate_passed: bool,
    pub threshold: f64,
    pub phase: Phase,
    pub disagreements: Vec<StudyId>,
    /// Set when the gate failed: criteria must be revisited before the next round.
    pub directive: Option<String>,
    pub warning: Option<String>,
}

/// Blinded view of a round for a particular viewer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub index: u32,
    pub batch: Vec<StudyId>,
    pub criteria_version: u32,
    pub status: RoundStatus,
    pub decisions: BTreeMap<ReviewerId, BTreeMap<StudyId, Decision>>,
    /// Number of studies each reviewer has decided; counts leak no verdicts.
    pub progress: BTreeMap<ReviewerId, usize>,
    pub report: Option<AgreementReport>,
    pub gate_passed: Option<bool>,
    pub resolutions: BTreeMap<StudyId, Resolution>,
    pub finalized: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounts {
    pub reviewed: usize,
    pub included: usize,
    pub excluded: usize,
}

impl PhaseCounts {
    pub(crate) fn add(&mut self, verdict: Verdict) {
        self.reviewed += 1;
        match verdict {
            Verdict::Include => self.included += 1,
            Verdict::Exclude => self.excluded += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaVersionSummary {
    pub version: u32,
    pub inclusion: usize,
    pub exclusion: usize,
    pub change_note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub phase: Phase,
    pub catalog_size: usize,
    pub rounds: usize,
    pub rounds_closed: usize,
    pub kappa_trajectory: Vec<Option<f64>>,
    pub criteria_versions: Vec<CriteriaVersionSummary>,
    pub phase1: PhaseCounts,
    pub phase2: PhaseCounts,
    pub phase2_by_reviewer: BTreeMap<ReviewerId, PhaseCounts>,
    pub total_included: usize,
    pub total_decided: usize,
    pub pending: usize,
}
