use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::sampling::{sample_positions, shuffle_for_partition};
use super::types::*;
use super::ProtocolError;
use crate::agreement::{agreement_report, tabulate, AgreementReport, Verdict};

/// Directive attached to a round report when kappa did not clear the threshold.
pub const REVISION_DIRECTIVE: &str = "criteria revision required";

/// Full state of one study-selection exercise.
///
/// Every mutating method either applies completely and bumps `revision`, or
/// returns an error and leaves the session untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewSession {
    revision: u64,
    created_at: Timestamp,
    reviewers: Vec<ReviewerId>,
    config: SessionConfig,
    studies: Vec<Study>,
    criteria_history: Vec<CriteriaSet>,
    rounds: Vec<Round>,
    phase: Phase,
    partitions: Option<Vec<Partition>>,
    phase2_decisions: BTreeMap<StudyId, Decision>,
    final_verdicts: BTreeMap<StudyId, FinalVerdict>,
    timing_log: Vec<TimingEntry>,
}

fn validate_criteria(c: &CriteriaRevision) -> Result<(), ProtocolError> {
    if c.inclusion.is_empty() && c.exclusion.is_empty() {
        return Err(ProtocolError::InvalidCriteria("no criteria given".into()));
    }
    if c.inclusion.iter().chain(&c.exclusion).any(|t| t.trim().is_empty()) {
        return Err(ProtocolError::InvalidCriteria("empty criterion text".into()));
    }
    Ok(())
}

fn validate_revision(c: &CriteriaRevision) -> Result<(), ProtocolError> {
    validate_criteria(c)?;
    if c.change_note.trim().is_empty() {
        return Err(ProtocolError::InvalidCriteria("a change note is required".into()));
    }
    Ok(())
}

impl ReviewSession {
    /// Start a session in phase 1 with `criteria` as version 1.
    pub fn create(
        catalog: Vec<Study>,
        reviewers: Vec<ReviewerId>,
        mut criteria: CriteriaRevision,
        config: SessionConfig,
        at: Timestamp,
    ) -> Result<Self, ProtocolError> {
        if catalog.is_empty() {
            return Err(ProtocolError::EmptyCatalog);
        }
        let mut seen = HashSet::new();
        for s in &catalog {
            if !seen.insert(s.id.as_str()) {
                return Err(ProtocolError::DuplicateStudyId(s.id.clone()));
            }
            if s.id.trim().is_empty() || s.title.trim().is_empty() {
                return Err(ProtocolError::InvalidStudy(s.id.clone()));
            }
        }
        if reviewers.len() != 2 {
            return Err(ProtocolError::InvalidConfig(format!(
                "exactly two reviewers are required, got {}",
                reviewers.len()
            )));
        }
        if reviewers[0] == reviewers[1] || reviewers.iter().any(|r| r.trim().is_empty()) {
            return Err(ProtocolError::InvalidConfig(
                "reviewer ids must be distinct and non-empty".into(),
            ));
        }
        if !(config.threshold > 0.0 && config.threshold < 1.0) {
            return Err(ProtocolError::InvalidConfig(format!(
                "threshold {} is outside (0, 1)",
                config.threshold
            )));
        }
        if config.batch_size == 0 {
            return Err(ProtocolError::InvalidConfig("batch size must be at least 1".into()));
        }
        validate_criteria(&criteria)?;
        if criteria.change_note.trim().is_empty() {
            criteria.change_note = "initial criteria".into();
        }
        Ok(Self {
            revision: 0,
            created_at: at,
            reviewers,
            config,
            studies: catalog,
            criteria_history: vec![CriteriaSet::freeze(1, criteria, at)],
            rounds: Vec::new(),
            phase: Phase::Phase1,
            partitions: None,
            phase2_decisions: BTreeMap::new(),
            final_verdicts: BTreeMap::new(),
            timing_log: Vec::new(),
        })
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }
    pub fn created_at(&self) -> Timestamp {
        self.created_at
    }
    pub fn reviewers(&self) -> &[ReviewerId] {
        &self.reviewers
    }
    pub fn config(&self) -> &SessionConfig {
        &self.config
    }
    pub fn studies(&self) -> &[Study] {
        &self.studies
    }
    pub fn study(&self, id: &str) -> Option<&Study> {
        self.studies.iter().find(|s| s.id == id)
    }
    pub fn criteria_history(&self) -> &[CriteriaSet] {
        &self.criteria_history
    }
    pub fn current_criteria(&self) -> &CriteriaSet {
        self.criteria_history.last().expect("session always has criteria")
    }
    pub fn criteria(&self, version: u32) -> Option<&CriteriaSet> {
        self.criteria_history.iter().find(|c| c.version() == version)
    }
    pub fn rounds(&self) -> &[Round] {
        &self.rounds
    }
    pub fn round(&self, index: u32) -> Result<&Round, ProtocolError> {
        index
            .checked_sub(1)
            .and_then(|i| self.rounds.get(i as usize))
            .ok_or(ProtocolError::UnknownRound(index))
    }
    pub fn phase(&self) -> Phase {
        self.phase
    }
    pub fn partitions(&self) -> Option<&[Partition]> {
        self.partitions.as_deref()
    }
    pub fn phase2_decisions(&self) -> &BTreeMap<StudyId, Decision> {
        &self.phase2_decisions
    }
    pub fn final_verdicts(&self) -> &BTreeMap<StudyId, FinalVerdict> {
        &self.final_verdicts
    }
    pub fn timing_log(&self) -> &[TimingEntry] {
        &self.timing_log
    }

    pub fn is_reviewer(&self, id: &str) -> bool {
        self.reviewers.iter().any(|r| r == id)
    }

    /// Studies never drawn into a round, in catalog order.
    pub fn remaining_pool(&self) -> Vec<&Study> {
        let drawn: HashSet<&str> = self
            .rounds
            .iter()
            .flat_map(|r| r.batch.iter().map(String::as_str))
            .collect();
        self.studies
            .iter()
            .filter(|s| !drawn.contains(s.id.as_str()))
            .collect()
    }

    /// The latest round if it is open or awaiting resolution.
    pub fn unfinished_round(&self) -> Option<&Round> {
        self.rounds.last().filter(|r| !r.finalized)
    }

    fn round_mut(&mut self, index: u32) -> Result<&mut Round, ProtocolError> {
        index
            .checked_sub(1)
            .and_then(|i| self.rounds.get_mut(i as usize))
            .ok_or(ProtocolError::UnknownRound(index))
    }

    fn require_phase(&self, expected: Phase) -> Result<(), ProtocolError> {
        if self.phase != expected {
            return Err(ProtocolError::WrongPhase {
                expected,
                actual: self.phase,
            });
        }
        Ok(())
    }

    fn require_no_unfinished_round(&self) -> Result<(), ProtocolError> {
        match self.unfinished_round() {
            Some(r) if r.is_open() => Err(ProtocolError::RoundAlreadyOpen(r.index)),
            Some(r) => Err(ProtocolError::RoundPendingResolution(r.index)),
            None => Ok(()),
        }
    }

    fn validate_citations(
        criteria: &CriteriaSet,
        input: &DecisionInput,
    ) -> Result<(), ProtocolError> {
        if let Some(bad) = input.cited.iter().find(|c| !criteria.contains(**c)) {
            return Err(ProtocolError::UnknownCriterion(bad.to_string()));
        }
        if input.verdict == Verdict::Exclude && input.cited.is_empty() {
            return Err(ProtocolError::MissingCriterion(input.study.clone()));
        }
        Ok(())
    }

    /// Draw the next phase-1 batch and open a round for it.
    pub fn sample_batch(&mut self) -> Result<&Round, ProtocolError> {
        self.require_phase(Phase::Phase1)?;
        self.require_no_unfinished_round()?;
        let pool = self.remaining_pool();
        if pool.is_empty() {
            return Err(ProtocolError::PoolExhausted);
        }
        let index = self.rounds.len() as u32 + 1;
        let batch = sample_positions(self.config.seed, index, pool.len(), self.config.batch_size)
            .into_iter()
            .map(|p| pool[p].id.clone())
            .collect();
        let round = Round {
            index,
            batch,
            criteria_version: self.current_criteria().version(),
            decisions: self
                .reviewers
                .iter()
                .map(|r| (r.clone(), BTreeMap::new()))
                .collect(),
            status: RoundStatus::Open,
            report: None,
            gate_passed: None,
            phase_after_close: None,
            resolutions: BTreeMap::new(),
            note: None,
            finalized: false,
        };
        self.rounds.push(round);
        self.revision += 1;
        Ok(self.rounds.last().expect("just pushed"))
    }

    /// Store one reviewer's verdict in an open round.
    pub fn record_decision(
        &mut self,
        round: u32,
        input: DecisionInput,
        at: Timestamp,
    ) -> Result<(), ProtocolError> {
        if !self.is_reviewer(&input.reviewer) {
            return Err(ProtocolError::NotAReviewer(input.reviewer));
        }
        let r = self.round(round)?;
        if !r.is_open() {
            return Err(ProtocolError::RoundClosed(round));
        }
        if !r.batch.contains(&input.study) {
            return Err(ProtocolError::UnknownStudy(input.study));
        }
        if r.verdict(&input.reviewer, &input.study).is_some() {
            return Err(ProtocolError::DuplicateDecision {
                reviewer: input.reviewer,
                study: input.study,
            });
        }
        let criteria_version = r.criteria_version;
        let criteria = self
            .criteria(criteria_version)
            .expect("rounds reference existing criteria");
        Self::validate_citations(criteria, &input)?;

        let decision = Decision {
            reviewer: input.reviewer.clone(),
            study: input.study.clone(),
            verdict: input.verdict,
            cited: input.cited,
            time_spent: input.time_spent,
            criteria_version,
            recorded_at: at,
        };
        self.round_mut(round)?
            .decisions
            .entry(input.reviewer)
            .or_default()
            .insert(input.study, decision);
        self.revision += 1;
        Ok(())
    }

    /// Tabulate the round, attach its agreement report and apply the gate.
    pub fn close_round(&mut self, round: u32) -> Result<RoundReport, ProtocolError> {
        let r = self.round(round)?;
        if !r.is_open() {
            return Err(ProtocolError::RoundClosed(round));
        }
        let missing: Vec<(String, String)> = self
            .reviewers
            .iter()
            .flat_map(|rev| {
                r.batch
                    .iter()
                    .filter(move |s| r.verdict(rev, s).is_none())
                    .map(move |s| (rev.clone(), s.clone()))
            })
            .collect();
        if !missing.is_empty() {
            return Err(ProtocolError::IncompleteDecisions(missing));
        }

        let (first, second) = (&self.reviewers[0], &self.reviewers[1]);
        let table = tabulate(r.batch.iter().map(|s| {
            (
                r.verdict(first, s).expect("checked complete"),
                r.verdict(second, s).expect("checked complete"),
            )
        }))
        .expect("batches are never empty");
        let report = agreement_report(&table);
        let threshold = self.config.threshold;
        let gate_passed = report.kappa.value().is_some_and(|k| k > threshold);
        let disagreements = r.disagreements(&self.reviewers);

        if gate_passed && self.phase == Phase::Phase1 {
            self.phase = Phase::Phase2;
        }
        let failed_rounds = self
            .rounds
            .iter()
            .filter(|r| r.gate_passed == Some(false))
            .count() as u32
            + u32::from(!gate_passed);
        let phase = self.phase;
        let r = self.round_mut(round)?;
        r.status = RoundStatus::Closed;
        r.report = Some(report.clone());
        r.gate_passed = Some(gate_passed);
        r.phase_after_close = Some(phase);
        self.revision += 1;

        let warning = (!gate_passed && failed_rounds >= self.config.max_rounds_warning).then(|| {
            format!("{failed_rounds} rounds closed without passing the gate; consider reworking the criteria more thoroughly")
        });
        Ok(RoundReport {
            round,
            report,
            gate_passed,
            threshold,
            phase,
            disagreements,
            directive: (!gate_passed).then(|| REVISION_DIRECTIVE.to_string()),
            warning,
        })
    }

    /// Fix final verdicts for a closed round and optionally append revised criteria.
    pub fn resolve_and_refine(
        &mut self,
        round: u32,
        input: ResolveInput,
        at: Timestamp,
    ) -> Result<(), ProtocolError> {
        let r = self.round(round)?;
        if r.is_open() {
            return Err(ProtocolError::RoundNotClosed(round));
        }
        if r.finalized || round as usize != self.rounds.len() {
            return Err(ProtocolError::StaleRound(round));
        }
        let gate_passed = r.gate_passed == Some(true);
        let disagreements = r.disagreements(&self.reviewers);

        let mut resolutions = BTreeMap::new();
        for res in input.resolutions {
            if !disagreements.contains(&res.study) {
                return Err(ProtocolError::UnexpectedResolution(res.study));
            }
            resolutions.insert(res.study.clone(), res);
        }
        let missing: Vec<String> = disagreements
            .iter()
            .filter(|s| !resolutions.contains_key(*s))
            .cloned()
            .collect();
        if !missing.is_empty() {
            match self.config.disagreement_policy {
                DisagreementPolicy::ConsensusRequired => {
                    return Err(ProtocolError::UnresolvedDisagreement(missing))
                }
                DisagreementPolicy::IncludeOnDisagreement => {
                    for study in missing {
                        resolutions.insert(
                            study.clone(),
                            Resolution {
                                study,
                                verdict: Verdict::Include,
                                note: "included on disagreement".into(),
                            },
                        );
                    }
                }
            }
        }
        let note = input.note.filter(|n| !n.trim().is_empty());
        match &input.revision {
            Some(_) if gate_passed => {
                return Err(ProtocolError::InvalidCriteria(
                    "criteria are frozen once the gate is passed".into(),
                ))
            }
            Some(rev) => validate_revision(rev)?,
            None if !gate_passed && note.is_none() => {
                return Err(ProtocolError::CriteriaNoteRequired)
            }
            None => {}
        }

        let first = self.reviewers[0].clone();
        let mut finals = Vec::with_capacity(r.batch.len());
        for study in &r.batch {
            let verdict = match resolutions.get(study) {
                Some(res) => FinalVerdict {
                    verdict: res.verdict,
                    source: VerdictSource::Resolution { round },
                },
                None => FinalVerdict {
                    verdict: r.verdict(&first, study).expect("closed rounds are complete"),
                    source: VerdictSource::Agreement { round },
                },
            };
            finals.push((study.clone(), verdict));
        }

        self.final_verdicts.extend(finals);
        if let Some(rev) = input.revision {
            let version = self.current_criteria().version() + 1;
            self.criteria_history.push(CriteriaSet::freeze(version, rev, at));
        }
        let r = self.round_mut(round)?;
        r.resolutions = resolutions;
        r.note = note;
        r.finalized = true;
        self.revision += 1;
        Ok(())
    }

    /// Append revised criteria between rounds.
    pub fn revise_criteria(
        &mut self,
        revision: CriteriaRevision,
        at: Timestamp,
    ) -> Result<u32, ProtocolError> {
        self.require_phase(Phase::Phase1)?;
        self.require_no_unfinished_round()?;
        validate_revision(&revision)?;
        let version = self.current_criteria().version() + 1;
        self.criteria_history.push(CriteriaSet::freeze(version, revision, at));
        self.revision += 1;
        Ok(version)
    }

    /// Shuffle the remaining pool and split it between the two reviewers.
    /// With an odd count the lexicographically first reviewer gets the extra study.
    pub fn partition_remaining(&mut self) -> Result<&[Partition], ProtocolError> {
        self.require_phase(Phase::Phase2)?;
        if self.partitions.is_some() {
            return Err(ProtocolError::AlreadyPartitioned);
        }
        if let Some(r) = self.unfinished_round() {
            return Err(ProtocolError::RoundPendingResolution(r.index));
        }
        let mut pool: Vec<StudyId> = self.remaining_pool().into_iter().map(|s| s.id.clone()).collect();
        shuffle_for_partition(self.config.seed, &mut pool);
        let mut reviewers = self.reviewers.clone();
        reviewers.sort();
        let second_half = pool.split_off(pool.len().div_ceil(2));
        let empty = pool.is_empty();
        self.partitions = Some(vec![
            Partition {
                reviewer: reviewers[0].clone(),
                studies: pool,
            },
            Partition {
                reviewer: reviewers[1].clone(),
                studies: second_half,
            },
        ]);
        if empty {
            self.phase = Phase::Complete;
        }
        self.revision += 1;
        Ok(self.partitions.as_deref().expect("just set"))
    }

    /// A single reviewer's final verdict on a study from their partition.
    pub fn record_phase2_decision(
        &mut self,
        input: DecisionInput,
        at: Timestamp,
    ) -> Result<bool, ProtocolError> {
        self.require_phase(Phase::Phase2)?;
        if !self.is_reviewer(&input.reviewer) {
            return Err(ProtocolError::NotAReviewer(input.reviewer));
        }
        let partitions = self.partitions.as_ref().ok_or(ProtocolError::NotPartitioned)?;
        if self.study(&input.study).is_none() {
            return Err(ProtocolError::UnknownStudy(input.study));
        }
        let mine = partitions
            .iter()
            .find(|p| p.reviewer == input.reviewer)
            .is_some_and(|p| p.studies.contains(&input.study));
        if !mine {
            return Err(ProtocolError::NotYourPartition {
                reviewer: input.reviewer,
                study: input.study,
            });
        }
        if self.final_verdicts.contains_key(&input.study) {
            return Err(ProtocolError::AlreadyDecided(input.study));
        }
        let criteria = self.current_criteria();
        Self::validate_citations(criteria, &input)?;

        let decision = Decision {
            reviewer: input.reviewer.clone(),
            study: input.study.clone(),
            verdict: input.verdict,
            cited: input.cited,
            time_spent: input.time_spent,
            criteria_version: criteria.version(),
            recorded_at: at,
        };
        self.final_verdicts.insert(
            input.study.clone(),
            FinalVerdict {
                verdict: input.verdict,
                source: VerdictSource::SingleReview {
                    reviewer: input.reviewer,
                },
            },
        );
        self.phase2_decisions.insert(input.study, decision);
        let assigned: usize = partitions.iter().map(|p| p.studies.len()).sum();
        let complete = self.phase2_decisions.len() == assigned;
        if complete {
            self.phase = Phase::Complete;
        }
        self.revision += 1;
        Ok(complete)
    }

    /// Append a line to the time sheet.
    pub fn record_timing(&mut self, entry: TimingEntry) -> Result<(), ProtocolError> {
        if entry.actor.trim().is_empty() || entry.task.trim().is_empty() {
            return Err(ProtocolError::InvalidTiming("actor and task are required".into()));
        }
        if !matches!(entry.phase, 1 | 2) {
            return Err(ProtocolError::InvalidTiming(format!(
                "phase must be 1 or 2, got {}",
                entry.phase
            )));
        }
        self.timing_log.push(entry);
        self.revision += 1;
        Ok(())
    }

    /// Round as seen by `viewer`: while the round is open, only the viewer's
    /// own verdicts are included.
    pub fn round_view(&self, round: u32, viewer: Option<&str>) -> Result<RoundView, ProtocolError> {
        let r = self.round(round)?;
        let progress = r
            .decisions
            .iter()
            .map(|(rev, ds)| (rev.clone(), ds.len()))
            .collect();
        let decisions = if r.is_open() {
            r.decisions
                .iter()
                .filter(|(rev, _)| Some(rev.as_str()) == viewer)
                .map(|(rev, ds)| (rev.clone(), ds.clone()))
                .collect()
        } else {
            r.decisions.clone()
        };
        Ok(RoundView {
            index: r.index,
            batch: r.batch.clone(),
            criteria_version: r.criteria_version,
            status: r.status,
            decisions,
            progress,
            report: r.report.clone(),
            gate_passed: r.gate_passed,
            resolutions: r.resolutions.clone(),
            finalized: r.finalized,
        })
    }

    /// Recompute a closed round's report as if `reviewer` had given `verdict`
    /// on `study`. Read-only.
    pub fn what_if(
        &self,
        round: u32,
        reviewer: &str,
        study: &str,
        verdict: Verdict,
    ) -> Result<AgreementReport, ProtocolError> {
        let r = self.round(round)?;
        if r.is_open() {
            return Err(ProtocolError::Blinded(round));
        }
        if !self.is_reviewer(reviewer) {
            return Err(ProtocolError::NotAReviewer(reviewer.to_string()));
        }
        if !r.batch.iter().any(|s| s == study) {
            return Err(ProtocolError::UnknownStudy(study.to_string()));
        }
        let pick = |rev: &str, s: &str| {
            if rev == reviewer && s == study {
                verdict
            } else {
                r.verdict(rev, s).expect("closed rounds are complete")
            }
        };
        let (first, second) = (&self.reviewers[0], &self.reviewers[1]);
        let table = tabulate(r.batch.iter().map(|s| (pick(first, s), pick(second, s))))
            .expect("batches are never empty");
        Ok(agreement_report(&table))
    }

    pub fn summary(&self) -> SessionSummary {
        let mut phase1 = PhaseCounts::default();
        let mut phase2 = PhaseCounts::default();
        let mut by_reviewer: BTreeMap<ReviewerId, PhaseCounts> = self
            .reviewers
            .iter()
            .map(|r| (r.clone(), PhaseCounts::default()))
            .collect();
        for fv in self.final_verdicts.values() {
            match &fv.source {
                VerdictSource::SingleReview { reviewer } => {
                    phase2.add(fv.verdict);
                    by_reviewer.entry(reviewer.clone()).or_default().add(fv.verdict);
                }
                _ => phase1.add(fv.verdict),
            }
        }
        SessionSummary {
            phase: self.phase,
            catalog_size: self.studies.len(),
            rounds: self.rounds.len(),
            rounds_closed: self.rounds.iter().filter(|r| !r.is_open()).count(),
            kappa_trajectory: self
                .rounds
                .iter()
                .filter_map(|r| r.report.as_ref().map(|rep| rep.kappa.value()))
                .collect(),
            criteria_versions: self
                .criteria_history
                .iter()
                .map(|c| CriteriaVersionSummary {
                    version: c.version(),
                    inclusion: c.inclusion().len(),
                    exclusion: c.exclusion().len(),
                    change_note: c.change_note().to_string(),
                })
                .collect(),
            phase1,
            phase2,
            phase2_by_reviewer: by_reviewer,
            total_included: phase1.included + phase2.included,
            total_decided: self.final_verdicts.len(),
            pending: self.studies.len() - self.final_verdicts.len(),
        }
    }
}
