//! Time accounting for dual versus split review.
//!
//! Reviewers work at a velocity `v` (studies per minute). The dual-review
//! phase lasts `T0` minutes and covers `S0 = v * T0` studies. Reviewing `S`
//! studies then takes
//!
//! * dual review throughout: `T0 + (S - S0) / v`
//! * split review after the gate: `T0 + (S - S0) / (2v)`
//!
//! and the fraction saved is `ts(S) = 1/2 - v T0 / (2S)` for `S >= S0`
//! (zero below), which rises towards one half.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::{Phase, ReviewSession};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeModelError {
    #[error("{0}")]
    Domain(String),
    #[error("invalid range: {0}")]
    InvalidRange(String),
    #[error("missing timings: {0}")]
    MissingTimings(String),
    #[error("session is not complete")]
    Incomplete,
    #[error("invalid duration `{0}`, expected hh:mm")]
    InvalidDuration(String),
}

/// Review velocity and length of the dual-review phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeModel {
    velocity: f64,
    dual_minutes: f64,
}

impl TimeModel {
    pub fn new(velocity: f64, dual_minutes: f64) -> Result<Self, TimeModelError> {
        if !(velocity.is_finite() && velocity > 0.0) {
            return Err(TimeModelError::Domain(format!(
                "velocity must be positive, got {velocity}"
            )));
        }
        if !(dual_minutes.is_finite() && dual_minutes >= 0.0) {
            return Err(TimeModelError::Domain(format!(
                "dual-phase time must be non-negative, got {dual_minutes}"
            )));
        }
        Ok(Self {
            velocity,
            dual_minutes,
        })
    }

    /// Studies per minute.
    pub fn velocity(&self) -> f64 {
        self.velocity
    }

    /// Dual-phase duration `T0` in minutes.
    pub fn dual_minutes(&self) -> f64 {
        self.dual_minutes
    }

    /// Studies covered during the dual phase, `S0 = v * T0`.
    pub fn dual_studies(&self) -> f64 {
        self.velocity * self.dual_minutes
    }

    fn check(&self, studies: f64) -> Result<(), TimeModelError> {
        let s0 = self.dual_studies();
        if studies < s0 {
            return Err(TimeModelError::Domain(format!(
                "{studies} studies is fewer than the {s0} covered by the dual phase"
            )));
        }
        Ok(())
    }
}

/// Minutes to review `studies` with both reviewers reading everything.
pub fn time_dual(studies: f64, m: &TimeModel) -> Result<f64, TimeModelError> {
    m.check(studies)?;
    Ok(m.dual_minutes + (studies - m.dual_studies()) / m.velocity)
}

/// Minutes to review `studies` when the post-gate remainder is split.
pub fn time_split(studies: f64, m: &TimeModel) -> Result<f64, TimeModelError> {
    m.check(studies)?;
    Ok(m.dual_minutes + (studies - m.dual_studies()) / (2.0 * m.velocity))
}

/// Fraction of dual-review time saved by splitting, `ts(S)`.
pub fn time_saving(studies: f64, m: &TimeModel) -> f64 {
    let s0 = m.dual_studies();
    if studies < s0 || studies <= 0.0 {
        return 0.0;
    }
    0.5 - s0 / (2.0 * studies)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub studies: f64,
    pub saving: f64,
}

/// Sampled `ts(S)` curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavingsCurve {
    pub model: TimeModel,
    pub points: Vec<CurvePoint>,
}

impl SavingsCurve {
    /// `studies,time_saving` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("studies,time_saving\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{:.6}", p.studies, p.saving);
        }
        out
    }
}

/// Evaluate `ts` at `steps` evenly spaced study counts over `[1, max_studies]`.
pub fn projection_curve(
    m: &TimeModel,
    max_studies: f64,
    steps: usize,
) -> Result<SavingsCurve, TimeModelError> {
    if steps < 2 {
        return Err(TimeModelError::InvalidRange(format!(
            "need at least 2 steps, got {steps}"
        )));
    }
    if !(max_studies.is_finite() && max_studies >= 1.0 && max_studies >= m.dual_studies()) {
        return Err(TimeModelError::InvalidRange(format!(
            "upper bound {max_studies} must be at least 1 and at least S0 = {}",
            m.dual_studies()
        )));
    }
    let span = max_studies - 1.0;
    let points = (0..steps)
        .map(|i| {
            let studies = 1.0 + span * i as f64 / (steps - 1) as f64;
            CurvePoint {
                studies,
                saving: time_saving(studies, m),
            }
        })
        .collect();
    Ok(SavingsCurve { model: *m, points })
}

/// Measured savings of a finished session against full dual review.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActualSavings {
    /// Every minute on the time sheet.
    pub total_minutes: u32,
    /// Estimated minutes for one reviewer to screen the whole catalog,
    /// rounded to the minute.
    pub traditional_per_reviewer: u32,
    pub traditional_total: u32,
    pub savings: f64,
}

impl ActualSavings {
    /// `actual 10:44 vs traditional 14:38 → 26.7%`
    pub fn summary_line(&self) -> String {
        format!(
            "actual {} vs traditional {} → {:.1}%",
            format_hhmm(self.total_minutes),
            format_hhmm(self.traditional_total),
            self.savings * 100.0
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittedTimes {
    pub model: TimeModel,
    pub phase2_studies: usize,
    pub phase2_reviewer_minutes: u32,
    pub actual: ActualSavings,
}

/// Fit `v` from phase-2 single review and compare the session's time sheet
/// with dual review of the whole catalog at that velocity.
///
/// `T0` is every phase-1 minute, coordination and meetings included.
pub fn fit_model(session: &ReviewSession) -> Result<FittedTimes, TimeModelError> {
    if session.phase() != Phase::Complete {
        return Err(TimeModelError::Incomplete);
    }
    let log = session.timing_log();
    if log.is_empty() {
        return Err(TimeModelError::MissingTimings("the time sheet is empty".into()));
    }
    let phase2_studies = session.phase2_decisions().len();
    let phase2_reviewer_minutes: u32 = log
        .iter()
        .filter(|e| e.phase == 2 && session.is_reviewer(&e.actor))
        .map(|e| e.minutes)
        .sum();
    if phase2_studies == 0 || phase2_reviewer_minutes == 0 {
        return Err(TimeModelError::MissingTimings(
            "no phase-2 review time to derive a velocity from".into(),
        ));
    }
    let velocity = phase2_studies as f64 / phase2_reviewer_minutes as f64;
    let dual_minutes: u32 = log.iter().filter(|e| e.phase == 1).map(|e| e.minutes).sum();
    let total_minutes: u32 = log.iter().map(|e| e.minutes).sum();
    let traditional_per_reviewer = (session.studies().len() as f64 / velocity).round() as u32;
    let traditional_total = 2 * traditional_per_reviewer;
    Ok(FittedTimes {
        model: TimeModel::new(velocity, dual_minutes as f64)?,
        phase2_studies,
        phase2_reviewer_minutes,
        actual: ActualSavings {
            total_minutes,
            traditional_per_reviewer,
            traditional_total,
            savings: 1.0 - total_minutes as f64 / traditional_total as f64,
        },
    })
}

/// `hh:mm` rendering of a minute count.
pub fn format_hhmm(minutes: u32) -> String {
    format!("{:02}:{:02}", minutes / 60, minutes % 60)
}

pub fn parse_hhmm(s: &str) -> Result<u32, TimeModelError> {
    let bad = || TimeModelError::InvalidDuration(s.to_string());
    let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
    let hours: u32 = h.parse().map_err(|_| bad())?;
    let minutes: u32 = m.parse().map_err(|_| bad())?;
    if minutes >= 60 || m.len() != 2 {
        return Err(bad());
    }
    Ok(hours * 60 + minutes)
}
