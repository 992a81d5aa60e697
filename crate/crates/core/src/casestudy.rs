//! The tertiary-study selection exercise as a scripted fixture.
//!
//! 152 secondary studies, reviewers `R1` and `R2`, three dual-review rounds
//! of 15 with contingency tables (9,1,1,4), (7,2,0,6) and (13,0,0,2), two
//! criteria revisions, then a 54/53 split in which `R1` includes 34 studies
//! and `R2` includes 35. Named study ids from the original discussion land in
//! the rounds where they were debated; everything else is synthetic.

use chrono::{Duration, TimeZone, Utc};

use crate::agreement::Verdict::{self, Exclude, Include};
use crate::protocol::sampling::{sample_positions, shuffle_for_partition};
use crate::protocol::{
    replay, Command, CriteriaRevision, CriterionRef, DecisionInput, Resolution, ResolveInput,
    ReviewSession, SessionConfig, Study, Timestamp, TimingEntry,
};

pub const SEED: u64 = 2018;
pub const CATALOG_SIZE: usize = 152;
pub const BATCH_SIZE: usize = 15;
pub const REVIEWERS: [&str; 2] = ["R1", "R2"];

const ROUNDS: usize = 3;
const PHASE2_INCLUDED: [usize; 2] = [34, 35];

/// Named studies per round, in the order they are slotted into the batch.
const ROUND1_B: &str = "35260";
const ROUND1_C: &str = "35705";
const ROUND1_EE: [&str; 4] = ["20381", "5023", "5040", "35552"];
const ROUND2_B: [&str; 2] = ["5340", "4822"];

pub fn start() -> Timestamp {
    Utc.with_ymd_and_hms(2018, 3, 5, 9, 0, 0).unwrap()
}

fn at(minutes: i64) -> Timestamp {
    start() + Duration::minutes(minutes)
}

pub fn initial_criteria() -> CriteriaRevision {
    CriteriaRevision {
        inclusion: vec![
            "Studies (SLRs, SMSs, literature surveys, or meta-analyses) that are written in English according to the research string pattern that is defined in the protocol".into(),
            "Studies that have a well-defined description of the primary study selection process".into(),
            "Studies that are within the software engineering domain".into(),
        ],
        exclusion: vec![
            "Studies that are outside the software engineering domain".into(),
            "Studies that deal with approaches/tools for improving/automating SLRs, SMSs, literature surveys or meta-analysis studies".into(),
            "Studies (SLRs, SMSs, literature surveys, or meta-analyses) that focus on processes other than the selection of primary studies".into(),
            "Studies (SLRs, SMSs, literature surveys, or meta-analyses) that are based on a methodology that lacks a primary selection process".into(),
            "Papers for which only PowerPoint presentations or extended abstracts were available".into(),
            "Short papers (less than 6 pages)".into(),
        ],
        change_note: "initial criteria".into(),
    }
}

fn refined_exclusion(third: &str) -> Vec<String> {
    vec![
        "Studies that do not include an SLR, SMS, literature survey, or meta-analysis. Examples are studies that present approaches/tools for improving/automating SLRs or SMSs".into(),
        "Studies such as theses, editorials, and books that were not subjected to a standardized peer-review process. Papers for which only PowerPoint presentations or extended abstracts were available. Short papers (less than 6 pages)".into(),
        third.into(),
        "Studies that are outside the software engineering domain".into(),
    ]
}

fn refined_inclusion(second: &str) -> Vec<String> {
    vec![
        "Studies (SLRs, SMSs, literature surveys, or meta-analyses) that are written in English according to the research string pattern that is defined in the protocol".into(),
        "Studies that are published in conference/workshop proceedings, journals, and book chapters".into(),
        second.into(),
        "Studies that are within the software engineering domain".into(),
    ]
}

/// Criteria after the first discussion.
pub fn second_criteria() -> CriteriaRevision {
    CriteriaRevision {
        inclusion: refined_inclusion("Studies that have a well-defined description of the primary study selection process. This description includes inclusion/exclusion criteria and an explanation of their application to the primary studies"),
        exclusion: refined_exclusion("Studies (SLRs, SMSs, literature surveys, or meta-analyses) that do not describe the primary study selection process"),
        change_note: "added publication-venue inclusion and peer-review exclusion; defined the selection process precisely; merged overlapping exclusions".into(),
    }
}

/// Criteria after the second discussion.
pub fn third_criteria() -> CriteriaRevision {
    CriteriaRevision {
        inclusion: refined_inclusion("Studies that have a well-defined description of the primary study selection process. This description includes at least the inclusion/exclusion criteria"),
        exclusion: refined_exclusion("Studies (SLRs, SMSs, literature surveys, or meta-analyses) that do not describe the primary study selection process (that is, they do not include the inclusion/exclusion criteria)"),
        change_note: "relaxed the selection-process requirement to stating inclusion/exclusion criteria".into(),
    }
}

pub fn config() -> SessionConfig {
    SessionConfig {
        batch_size: BATCH_SIZE,
        ..SessionConfig::with_seed(SEED)
    }
}

fn synthetic_id(i: usize) -> String {
    (10_000 + i * 37).to_string()
}

/// Catalog positions of each round's batch, in catalog order.
fn round_positions() -> Vec<Vec<usize>> {
    let mut pool: Vec<usize> = (0..CATALOG_SIZE).collect();
    let mut rounds = Vec::new();
    for round in 1..=ROUNDS as u32 {
        let picked: Vec<usize> = sample_positions(SEED, round, pool.len(), BATCH_SIZE)
            .into_iter()
            .map(|p| pool[p])
            .collect();
        pool.retain(|i| !picked.contains(i));
        rounds.push(picked);
    }
    rounds
}

/// Study ids in catalog order.
fn catalog_ids() -> Vec<String> {
    let mut ids: Vec<String> = (0..CATALOG_SIZE).map(synthetic_id).collect();
    let rounds = round_positions();
    let named: [(usize, usize, &str); 8] = [
        (0, 9, ROUND1_B),
        (0, 10, ROUND1_C),
        (0, 11, ROUND1_EE[0]),
        (0, 12, ROUND1_EE[1]),
        (0, 13, ROUND1_EE[2]),
        (0, 14, ROUND1_EE[3]),
        (1, 7, ROUND2_B[0]),
        (1, 8, ROUND2_B[1]),
    ];
    for (round, slot, id) in named {
        ids[rounds[round][slot]] = id.to_string();
    }
    ids
}

pub fn catalog() -> Vec<Study> {
    catalog_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let title = match id.as_str() {
                ROUND1_C => "A mapping study of requirements prioritization (master's thesis)".to_string(),
                _ => format!("Secondary study {} on software engineering practice", i + 1),
            };
            Study::new(id, title, "digital library search", 2005 + (i % 14) as i32)
        })
        .collect()
}

pub fn create_command() -> Command {
    Command::CreateSession {
        catalog: catalog(),
        reviewers: REVIEWERS.iter().map(|r| r.to_string()).collect(),
        criteria: initial_criteria(),
        config: config(),
        at: start(),
    }
}

fn refs(list: &str) -> Vec<CriterionRef> {
    CriterionRef::parse_list(list).expect("fixture citations parse")
}

fn decision(reviewer: &str, study: &str, verdict: Verdict, cited: &str, minutes: u32) -> DecisionInput {
    DecisionInput {
        reviewer: reviewer.to_string(),
        study: study.to_string(),
        verdict,
        cited: refs(cited),
        time_spent: minutes,
    }
}

/// Verdict pairs and citations for one batch, by slot.
type Slot = (Verdict, &'static str, Verdict, &'static str);

fn round_slots(round: usize) -> Vec<Slot> {
    let ii = (Include, "IC1;IC2;IC3", Include, "IC1;IC2;IC3");
    let ii4 = (Include, "IC1;IC2;IC3;IC4", Include, "IC1;IC2;IC3;IC4");
    match round {
        0 => {
            let mut s = vec![ii; 9];
            s.push((Exclude, "EC3", Include, "IC1;IC2;IC3"));
            s.push((Include, "IC1;IC2;IC3", Exclude, "EC4"));
            s.extend([(Exclude, "EC2", Exclude, "EC3"); 4]);
            s
        }
        1 => {
            let mut s = vec![ii4; 7];
            s.push((Exclude, "EC1", Include, "IC1;IC2;IC3;IC4"));
            s.push((Exclude, "EC3", Include, "IC1;IC2;IC3;IC4"));
            s.extend([(Exclude, "EC2", Exclude, "EC2"); 3]);
            s.extend([(Exclude, "EC4", Exclude, "EC4"); 3]);
            s
        }
        _ => {
            let mut s = vec![ii4; 13];
            s.extend([(Exclude, "EC2", Exclude, "EC2"); 2]);
            s
        }
    }
}

fn resolutions(round: usize) -> ResolveInput {
    let res = |study: &str, verdict, note: &str| Resolution {
        study: study.to_string(),
        verdict,
        note: note.to_string(),
    };
    match round {
        0 => ResolveInput {
            resolutions: vec![
                res(ROUND1_C, Exclude, "master's thesis, not peer reviewed"),
                res(ROUND1_B, Include, "selection process described once the concept is made precise"),
            ],
            revision: Some(second_criteria()),
            note: Some(
                "35705 is a thesis; 35260 hinged on what counts as a primary study selection process; \
                 20381, 5023, 5040 and 35552 were excluded by both under different criteria"
                    .into(),
            ),
        },
        1 => ResolveInput {
            resolutions: vec![
                res(ROUND2_B[0], Include, "a literature survey"),
                res(ROUND2_B[1], Exclude, "no inclusion/exclusion criteria stated"),
            ],
            revision: Some(third_criteria()),
            note: Some("both disagreements traced to the selection-process criterion".into()),
        },
        _ => ResolveInput {
            note: Some("full agreement; dual review ends".into()),
            ..ResolveInput::default()
        },
    }
}

/// Case-study time sheet.
pub fn timings() -> Vec<TimingEntry> {
    let entry = |actor: &str, task: &str, phase, minutes| TimingEntry {
        actor: actor.to_string(),
        task: task.to_string(),
        phase,
        minutes,
    };
    vec![
        entry("R3", "selection of 45 studies for dual review", 1, 30),
        entry("R1", "screening of studies 01-45 against the criteria", 1, 140),
        entry("R2", "screening of studies 01-45 against the criteria", 1, 125),
        entry("R1 & R2", "two meetings to discuss the criteria", 1, 30),
        entry("R3", "split of the remaining 107 studies", 2, 10),
        entry("R1", "single screening of the assigned studies", 2, 144),
        entry("R2", "single screening of the assigned studies", 2, 165),
    ]
}

/// Commands up to and including the close of the first round.
pub fn iteration_one_script() -> Vec<Command> {
    let mut out = vec![create_command()];
    push_round(&mut out, 0, &round_positions()[0]);
    out
}

fn push_round(out: &mut Vec<Command>, round: usize, positions: &[usize]) {
    let ids = catalog_ids();
    let index = round as u32 + 1;
    let base = 60 * 24 * 7 * round as i64;
    out.push(Command::SampleBatch);
    for (slot, (&pos, (v1, c1, v2, c2))) in positions.iter().zip(round_slots(round)).enumerate() {
        let study = &ids[pos];
        for (k, (reviewer, verdict, cited)) in [("R1", v1, c1), ("R2", v2, c2)].into_iter().enumerate() {
            out.push(Command::RecordDecision {
                round: index,
                decision: decision(reviewer, study, verdict, cited, 8),
                at: at(base + 10 * slot as i64 + k as i64),
            });
        }
    }
    out.push(Command::CloseRound { round: index });
}

/// Every command of the exercise, in order.
pub fn script() -> Vec<Command> {
    let positions = round_positions();
    let mut out = vec![create_command()];
    for (round, batch) in positions.iter().enumerate() {
        push_round(&mut out, round, batch);
        out.push(Command::ResolveAndRefine {
            round: round as u32 + 1,
            resolve: resolutions(round),
            at: at(60 * 24 * (7 * round as i64 + 3)),
        });
    }
    out.push(Command::PartitionRemaining);

    let ids = catalog_ids();
    let drawn: Vec<usize> = positions.concat();
    let mut pool: Vec<String> = (0..CATALOG_SIZE)
        .filter(|i| !drawn.contains(i))
        .map(|i| ids[i].clone())
        .collect();
    shuffle_for_partition(SEED, &mut pool);
    let second = pool.split_off(pool.len().div_ceil(2));
    let phase2_start = 60 * 24 * 28;
    for (r, (reviewer, studies)) in [("R1", pool), ("R2", second)].into_iter().enumerate() {
        for (i, study) in studies.iter().enumerate() {
            let (verdict, cited) = if i < PHASE2_INCLUDED[r] {
                (Include, "IC1;IC2;IC3;IC4")
            } else {
                (Exclude, ["EC1", "EC2", "EC3", "EC4"][i % 4])
            };
            out.push(Command::RecordPhase2Decision {
                decision: decision(reviewer, study, verdict, cited, 3),
                at: at(phase2_start + 1000 * r as i64 + i as i64),
            });
        }
    }
    out.extend(timings().into_iter().map(|entry| Command::RecordTiming { entry }));
    out
}

/// Completed session.
pub fn session() -> ReviewSession {
    replay(&script()).expect("fixture script applies")
}

/// Session right after creation.
pub fn fresh_session() -> ReviewSession {
    create_command().create().expect("fixture session is valid")
}

/// Session with the first round closed and not yet resolved.
pub fn iteration_one() -> ReviewSession {
    replay(&iteration_one_script()).expect("fixture script applies")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Phase;

    #[test]
    fn named_studies_are_in_their_rounds() {
        let s = session();
        assert!(s.round(1).unwrap().batch.contains(&ROUND1_C.to_string()));
        assert!(s.round(2).unwrap().batch.contains(&ROUND2_B[1].to_string()));
        assert_eq!(s.studies().len(), CATALOG_SIZE);
    }

    #[test]
    fn tables_and_counts() {
        let s = session();
        let tables: Vec<String> = s
            .rounds()
            .iter()
            .map(|r| r.report.as_ref().unwrap().table.to_string())
            .collect();
        assert_eq!(tables, ["(9, 1, 1, 4)", "(7, 2, 0, 6)", "(13, 0, 0, 2)"]);
        assert_eq!(s.phase(), Phase::Complete);
        let summary = s.summary();
        assert_eq!(summary.phase1.included, 31);
        assert_eq!(summary.phase2_by_reviewer["R1"].included, 34);
        assert_eq!(summary.phase2_by_reviewer["R2"].included, 35);
        assert_eq!(summary.total_included, 100);
        assert_eq!(s.criteria_history().len(), 3);
    }

    #[test]
    fn iteration_one_is_closed_but_unresolved() {
        let s = iteration_one();
        let r = s.round(1).unwrap();
        assert!(!r.is_open());
        assert!(!r.finalized);
        assert_eq!(r.gate_passed, Some(false));
    }
}
