#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chrono::SecondsFormat;

use kappagate_core::agreement::Verdict;
use kappagate_core::protocol::{Command, CriteriaRevision, CriterionRef, DisagreementPolicy, Timestamp};
use kappagate_core::store::write_catalog;
use kappagate_cli::{run, CommandResult};

fn verdict(v: Verdict) -> &'static str {
    match v {
        Verdict::Include => "include",
        Verdict::Exclude => "exclude",
    }
}

fn at(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

fn write_criteria(dir: &Path, name: &str, c: &CriteriaRevision) -> String {
    let path = dir.join(name);
    std::fs::write(&path, toml::to_string(c).unwrap()).unwrap();
    path.display().to_string()
}

/// Arguments that perform `cmd` on `session`; auxiliary files go into `dir`
/// with names derived from `step`.
pub fn argv_for(cmd: &Command, session: &Path, dir: &Path, step: usize) -> Vec<String> {
    let mut argv: Vec<String> = vec!["kappagate".into(), "--session".into(), session.display().to_string()];
    let mut push = |xs: &[&str]| argv.extend(xs.iter().map(|s| s.to_string()));
    match cmd {
        Command::CreateSession {
            catalog,
            reviewers,
            criteria,
            config,
            at: t,
        } => {
            let csv = dir.join(format!("{step}-catalog.csv"));
            write_catalog(catalog, std::fs::File::create(&csv).unwrap()).unwrap();
            let crit = write_criteria(dir, &format!("{step}-criteria.toml"), criteria);
            let policy = match config.disagreement_policy {
                DisagreementPolicy::ConsensusRequired => "consensus",
                DisagreementPolicy::IncludeOnDisagreement => "include",
            };
            push(&[
                "--actor", "R3", "--seed", &config.seed.to_string(), "--at", &at(t),
                "init", "--catalog", &csv.display().to_string(),
                "--reviewers", &reviewers.join(","), "--criteria", &crit,
                "--batch-size", &config.batch_size.to_string(),
                "--threshold", &config.threshold.to_string(),
                "--policy", policy,
                "--max-rounds-warning", &config.max_rounds_warning.to_string(),
            ]);
        }
        Command::SampleBatch => push(&["--actor", "R3", "sample"]),
        Command::RecordDecision { round, decision: d, at: t } => push(&[
            "--actor", &d.reviewer, "--at", &at(t), "decide", "--round", &round.to_string(),
            "--study", &d.study, "--verdict", verdict(d.verdict),
            "--cite", &CriterionRef::format_list(&d.cited), "--time", &d.time_spent.to_string(),
        ]),
        Command::CloseRound { round } => push(&["--actor", "R3", "close-round", "--round", &round.to_string()]),
        Command::ResolveAndRefine { round, resolve, at: t } => {
            push(&["--actor", "R3", "--at", &at(t), "resolve", "--round", &round.to_string()]);
            for r in &resolve.resolutions {
                push(&["--resolution", &format!("{}={}:{}", r.study, verdict(r.verdict), r.note)]);
            }
            if let Some(rev) = &resolve.revision {
                let crit = write_criteria(dir, &format!("{step}-criteria.toml"), rev);
                push(&["--criteria", &crit]);
            }
            if let Some(note) = &resolve.note {
                push(&["--note", note]);
            }
        }
        Command::ReviseCriteria { revision, at: t } => {
            let crit = write_criteria(dir, &format!("{step}-criteria.toml"), revision);
            push(&["--actor", "R3", "--at", &at(t), "criteria", "revise", "--file", &crit]);
        }
        Command::PartitionRemaining => push(&["--actor", "R3", "partition"]),
        Command::RecordPhase2Decision { decision: d, at: t } => push(&[
            "--actor", &d.reviewer, "--at", &at(t), "decide2",
            "--study", &d.study, "--verdict", verdict(d.verdict),
            "--cite", &CriterionRef::format_list(&d.cited), "--time", &d.time_spent.to_string(),
        ]),
        Command::RecordTiming { entry } => push(&[
            "--actor", "R3", "log-time", "--who", &entry.actor, "--task", &entry.task,
            "--phase", &entry.phase.to_string(), "--minutes", &entry.minutes.to_string(),
        ]),
    }
    argv
}

pub fn cli(argv: &[String]) -> CommandResult {
    run(argv.iter().cloned())
}

pub fn cli_ok(argv: &[String]) -> CommandResult {
    let r = cli(argv);
    assert_eq!(r.exit_code, 0, "{argv:?} failed: {}", r.text);
    r
}

/// Run `script` through the CLI into a fresh session under `dir`.
pub fn run_script_cli(script: &[Command], dir: &Path) -> PathBuf {
    let session = dir.join("session.json");
    for (i, cmd) in script.iter().enumerate() {
        cli_ok(&argv_for(cmd, &session, dir, i));
    }
    session
}

pub fn args(xs: &[&str]) -> Vec<String> {
    std::iter::once("kappagate").chain(xs.iter().copied()).map(String::from).collect()
}
