use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde_json::{json, Value};

use kappagate_core::agreement::{AgreementReport, Verdict};
use kappagate_core::protocol::{
    Command, CriteriaRevision, CriterionRef, DecisionInput, DisagreementPolicy, Outcome,
    Resolution, ResolveInput, ReviewSession, RoundReport, SessionConfig, Timestamp, TimingEntry,
};
use kappagate_core::store::{import_catalog, write_catalog, SessionStore, StoreError};
use kappagate_core::timing::{
    fit_model, format_hhmm, parse_hhmm, projection_curve, TimeModel,
};
use kappagate_service::ServiceConfig;

use crate::args::*;
use crate::forms::parse_selection_form;
use crate::{CliError, Output};

struct Ctx {
    session: Option<std::path::PathBuf>,
    seed: Option<u64>,
    actor: Option<String>,
    at: Timestamp,
}

impl Ctx {
    fn store(&self) -> Result<SessionStore, CliError> {
        let path = self
            .session
            .as_ref()
            .ok_or_else(|| CliError::user("missing_session", "--session is required"))?;
        Ok(SessionStore::open(path))
    }

    fn actor(&self) -> String {
        self.actor.clone().unwrap_or_else(|| "cli".into())
    }

    /// Load the session and check `--seed` against it.
    fn load(&self) -> Result<(SessionStore, ReviewSession), CliError> {
        let store = self.store()?;
        let session = store.load()?;
        self.check_seed(&session)?;
        Ok((store, session))
    }

    fn check_seed(&self, session: &ReviewSession) -> Result<(), CliError> {
        match self.seed {
            Some(seed) if seed != session.config().seed => Err(CliError::user(
                "seed_mismatch",
                format!(
                    "--seed {seed} does not match the session seed {}",
                    session.config().seed
                ),
            )),
            _ => Ok(()),
        }
    }

    fn execute(&self, commands: Vec<Command>) -> Result<(ReviewSession, Vec<Outcome>), CliError> {
        let store = self.store()?;
        self.check_seed(&store.load()?)?;
        Ok(store.execute(&self.actor(), commands, None)?)
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| {
        StoreError::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

fn read_criteria(path: &Path) -> Result<CriteriaRevision, CliError> {
    toml::from_str(&read_file(path)?).map_err(|e| {
        CliError::user(
            "invalid_criteria",
            format!("{}: {}", path.display(), e.message()),
        )
    })
}

fn parse_verdict(s: &str) -> Result<Verdict, CliError> {
    Verdict::parse(s).ok_or_else(|| {
        CliError::user(
            "invalid_verdict",
            format!("unknown verdict `{s}`, expected include or exclude"),
        )
    })
}

/// Whole minutes or `hh:mm`.
fn parse_minutes(s: &str) -> Result<u32, CliError> {
    if s.contains(':') {
        Ok(parse_hhmm(s)?)
    } else {
        s.trim()
            .parse()
            .map_err(|_| CliError::user("invalid_duration", format!("invalid duration `{s}`")))
    }
}

fn parse_at(s: Option<&str>) -> Result<Timestamp, CliError> {
    match s {
        None => Ok(Utc::now()),
        Some(s) => DateTime::parse_from_rfc3339(s)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| CliError::user("invalid_timestamp", format!("--at `{s}`: {e}"))),
    }
}

fn mutation(session: &ReviewSession, outcomes: &[Outcome]) -> Value {
    json!({
        "revision": session.revision(),
        "phase": session.phase(),
        "outcomes": outcomes,
    })
}

fn latest_round(session: &ReviewSession) -> Result<u32, CliError> {
    session
        .rounds()
        .last()
        .map(|r| r.index)
        .ok_or_else(|| CliError::user("no_rounds", "no round has been sampled yet"))
}

fn open_round(session: &ReviewSession) -> Result<u32, CliError> {
    session
        .rounds()
        .iter()
        .rev()
        .find(|r| r.is_open())
        .map(|r| r.index)
        .ok_or_else(|| CliError::user("no_open_round", "no round is open"))
}

pub(crate) fn dispatch(cli: Cli) -> Result<Output, CliError> {
    let ctx = Ctx {
        session: cli.session,
        seed: cli.seed,
        actor: cli.actor,
        at: parse_at(cli.at.as_deref())?,
    };
    match cli.command {
        Sub::Init(a) => init(&ctx, a),
        Sub::Import(a) => import(a),
        Sub::Criteria(c) => criteria(&ctx, c),
        Sub::Sample => sample(&ctx),
        Sub::Decide(a) => decide(&ctx, a.round, a.verdict, 1),
        Sub::CloseRound(a) => close_round(&ctx, a),
        Sub::Resolve(a) => resolve(&ctx, a),
        Sub::Partition => partition(&ctx),
        Sub::Decide2(a) => decide(&ctx, None, a.verdict, 2),
        Sub::LogTime(a) => log_time(&ctx, a),
        Sub::Round(a) => round_view(&ctx, a),
        Sub::Whatif(a) => what_if(&ctx, a),
        Sub::Summary => summary(&ctx),
        Sub::Report(a) => report(&ctx, a),
        Sub::Savings => savings(&ctx),
        Sub::Curve(a) => curve(&ctx, a),
        Sub::Verify => verify(&ctx),
        Sub::Serve(a) => serve(a),
    }
}

fn init(ctx: &Ctx, a: InitArgs) -> Result<Output, CliError> {
    let store = ctx.store()?;
    let text = read_file(&a.catalog)?;
    let (catalog, dedup) = import_catalog(text.as_bytes())?;
    let criteria = read_criteria(&a.criteria)?;
    let defaults = SessionConfig::default();
    let policy = match &a.policy {
        Some(p) => p.parse::<DisagreementPolicy>()?,
        None => DisagreementPolicy::default(),
    };
    let config = SessionConfig {
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        threshold: a.threshold.unwrap_or(defaults.threshold),
        seed: ctx.seed.unwrap_or_else(|| SessionConfig::seed_for(ctx.at)),
        disagreement_policy: policy,
        max_rounds_warning: a.max_rounds_warning.unwrap_or(defaults.max_rounds_warning),
    };
    let seed = config.seed;
    let command = Command::CreateSession {
        catalog,
        reviewers: a.reviewers,
        criteria,
        config,
        at: ctx.at,
    };
    let session = store.create(&ctx.actor(), command)?;
    let mut text = format!(
        "created {} with {} studies ({} rows, {} duplicates), seed {seed}\n",
        store.path().display(),
        session.studies().len(),
        dedup.rows,
        dedup.duplicates.len()
    );
    let _ = writeln!(
        text,
        "reviewers {}; criteria v1: {} inclusion, {} exclusion",
        session.reviewers().join(", "),
        session.current_criteria().inclusion().len(),
        session.current_criteria().exclusion().len()
    );
    Ok(Output {
        text,
        payload: json!({
            "session": store.path(),
            "revision": session.revision(),
            "studies": session.studies().len(),
            "seed": seed,
            "dedup": dedup,
        }),
    })
}

fn import(a: ImportArgs) -> Result<Output, CliError> {
    let text = read_file(&a.file)?;
    let (studies, dedup) = import_catalog(text.as_bytes())?;
    let mut out = format!(
        "{} rows, {} unique, {} duplicates\n",
        dedup.rows,
        dedup.imported,
        dedup.duplicates.len()
    );
    for d in &dedup.duplicates {
        let _ = writeln!(out, "  {}", serde_json::to_string(d).expect("serializable"));
    }
    if let Some(path) = &a.out {
        let mut buf = Vec::new();
        write_catalog(&studies, &mut buf)?;
        write_file(path, &String::from_utf8(buf).expect("catalog is utf-8"))?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    Ok(Output {
        text: out,
        payload: json!({ "dedup": dedup, "studies": studies.len() }),
    })
}

fn criteria(ctx: &Ctx, c: CriteriaCmd) -> Result<Output, CliError> {
    match c {
        CriteriaCmd::Show { version } => {
            let (_, session) = ctx.load()?;
            let set = match version {
                Some(v) => session.criteria(v).ok_or_else(|| {
                    CliError::user("unknown_version", format!("no criteria version {v}"))
                })?,
                None => session.current_criteria(),
            };
            let mut text = format!("criteria v{}", set.version());
            if !set.change_note().is_empty() {
                let _ = write!(text, " ({})", set.change_note());
            }
            text.push('\n');
            for (r, t) in set.labelled() {
                let _ = writeln!(text, "{r}  {t}");
            }
            Ok(Output {
                text,
                payload: serde_json::to_value(set).expect("serializable"),
            })
        }
        CriteriaCmd::Revise { file } => {
            let revision = read_criteria(&file)?;
            let (session, outcomes) = ctx.execute(vec![Command::ReviseCriteria {
                revision,
                at: ctx.at,
            }])?;
            Ok(Output {
                text: format!("criteria v{}\n", session.current_criteria().version()),
                payload: mutation(&session, &outcomes),
            })
        }
    }
}

fn sample(ctx: &Ctx) -> Result<Output, CliError> {
    let (session, outcomes) = ctx.execute(vec![Command::SampleBatch])?;
    let mut text = String::new();
    if let Some(Outcome::RoundOpened { round, batch }) = outcomes.first() {
        let _ = writeln!(text, "round {round}: {} studies", batch.len());
        for id in batch {
            let title = session.study(id).map_or("", |s| s.title.as_str());
            let _ = writeln!(text, "{id}\t{title}");
        }
    }
    Ok(Output {
        text,
        payload: mutation(&session, &outcomes),
    })
}

fn decide(ctx: &Ctx, round: Option<u32>, v: VerdictArgs, phase: u8) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let round = match (phase, round) {
        (1, Some(r)) => r,
        (1, None) => open_round(&session)?,
        _ => 0,
    };
    let default_reviewer = v.reviewer.clone().or_else(|| ctx.actor.clone());
    let mut decisions = Vec::new();
    let mut timing = None;
    let mut reviewer = default_reviewer.clone();
    if let Some(path) = &v.file {
        let form = parse_selection_form(&read_file(path)?)?;
        if let (Some(given), Some(in_form)) = (&v.reviewer, &form.reviewer) {
            if given != in_form {
                return Err(CliError::user(
                    "reviewer_mismatch",
                    format!("--reviewer {given} but the form is signed by {in_form}"),
                ));
            }
        }
        reviewer = form.reviewer.clone().or(default_reviewer);
        let who = reviewer
            .clone()
            .ok_or_else(|| CliError::user("missing_reviewer", "no reviewer given"))?;
        for row in form.rows {
            decisions.push(DecisionInput {
                reviewer: who.clone(),
                study: row.study,
                verdict: row.verdict,
                cited: row.cited,
                time_spent: 0,
            });
        }
        timing = form.time_spent.map(|minutes| TimingEntry {
            actor: who.clone(),
            task: match phase {
                1 => format!("screening of round {round}"),
                _ => "single screening of the assigned studies".into(),
            },
            phase,
            minutes,
        });
    } else {
        let who = reviewer
            .clone()
            .ok_or_else(|| CliError::user("missing_reviewer", "no reviewer given"))?;
        let study = v.study.clone().ok_or_else(|| {
            CliError::user("missing_study", "give --study and --verdict, or --file")
        })?;
        let verdict = parse_verdict(v.verdict.as_deref().unwrap_or_default())?;
        decisions.push(DecisionInput {
            reviewer: who,
            study,
            verdict,
            cited: CriterionRef::parse_list(&v.cite)?,
            time_spent: v.time.as_deref().map(parse_minutes).transpose()?.unwrap_or(0),
        });
    }
    let count = decisions.len();
    let mut commands: Vec<Command> = decisions
        .into_iter()
        .map(|decision| match phase {
            1 => Command::RecordDecision {
                round,
                decision,
                at: ctx.at,
            },
            _ => Command::RecordPhase2Decision { decision, at: ctx.at },
        })
        .collect();
    commands.extend(timing.map(|entry| Command::RecordTiming { entry }));
    let (session, outcomes) = ctx.execute(commands)?;
    let who = reviewer.unwrap_or_default();
    let mut text = match phase {
        1 => format!("recorded {count} verdict(s) from {who} in round {round}\n"),
        _ => format!("recorded {count} phase-2 verdict(s) from {who}\n"),
    };
    if phase == 2 && session.phase() == kappagate_core::protocol::Phase::Complete {
        text.push_str("all studies decided; session complete\n");
    }
    Ok(Output {
        text,
        payload: mutation(&session, &outcomes),
    })
}

fn kappa_line(report: &AgreementReport) -> String {
    let d = report.display();
    match report.band {
        Some(band) => format!("k={} ({band})", d.k),
        None => format!("k={}", d.k),
    }
}

fn stats_lines(report: &AgreementReport) -> String {
    let d = report.display();
    let mut out = format!(
        "table {}  p0={} pc={} k_max={} k_min={} k_nor={}\n",
        report.table, d.p0, d.pc, d.k_max, d.k_min, d.k_nor
    );
    let _ = writeln!(
        out,
        "s_d={} s_a={} P++={} P--={}",
        d.s_d, d.s_a, d.ppp, d.pmm
    );
    if let Some(p) = report.paradox.filter(|p| p.flagged) {
        let _ = writeln!(
            out,
            "paradox: high observed agreement with low kappa (|k - k_nor| = {:.2})",
            p.deviation
        );
    }
    out
}

fn close_text(r: &RoundReport) -> String {
    let verdict = if r.gate_passed {
        "gate passed; phase 2 begins"
    } else {
        "gate NOT passed; revise criteria"
    };
    let mut out = format!("round {}: {} — {verdict}\n", r.round, kappa_line(&r.report));
    out.push_str(&stats_lines(&r.report));
    if let Some(w) = &r.warning {
        let _ = writeln!(out, "warning: {w}");
    }
    if !r.disagreements.is_empty() {
        let _ = writeln!(out, "disagreements: {}", r.disagreements.join(", "));
    }
    out
}

fn close_round(ctx: &Ctx, a: RoundArg) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let round = match a.round {
        Some(r) => r,
        None => open_round(&session).or_else(|_| latest_round(&session))?,
    };
    let (session, outcomes) = ctx.execute(vec![Command::CloseRound { round }])?;
    let text = match outcomes.first() {
        Some(Outcome::RoundClosed { report }) => close_text(report),
        _ => String::new(),
    };
    Ok(Output {
        text,
        payload: mutation(&session, &outcomes),
    })
}

fn parse_resolution(s: &str) -> Result<Resolution, CliError> {
    let bad = || {
        CliError::user(
            "invalid_resolution",
            format!("`{s}`: expected STUDY=include|exclude[:note]"),
        )
    };
    let (study, rest) = s.split_once('=').ok_or_else(bad)?;
    let (verdict, note) = rest.split_once(':').unwrap_or((rest, ""));
    Ok(Resolution {
        study: study.trim().to_string(),
        verdict: parse_verdict(verdict.trim()).map_err(|_| bad())?,
        note: note.trim().to_string(),
    })
}

fn resolve(ctx: &Ctx, a: ResolveArgs) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let round = match a.round {
        Some(r) => r,
        None => latest_round(&session)?,
    };
    let resolutions = a
        .resolutions
        .iter()
        .map(|s| parse_resolution(s))
        .collect::<Result<Vec<_>, _>>()?;
    let revision = a.criteria.as_deref().map(read_criteria).transpose()?;
    let cmd = Command::ResolveAndRefine {
        round,
        resolve: ResolveInput {
            resolutions,
            revision,
            note: a.note,
        },
        at: ctx.at,
    };
    let (session, outcomes) = ctx.execute(vec![cmd])?;
    let text = format!(
        "round {round} resolved; criteria v{}; {}\n",
        session.current_criteria().version(),
        session.phase()
    );
    Ok(Output {
        text,
        payload: mutation(&session, &outcomes),
    })
}

fn partition(ctx: &Ctx) -> Result<Output, CliError> {
    let (session, outcomes) = ctx.execute(vec![Command::PartitionRemaining])?;
    let mut text = String::new();
    for p in session.partitions().unwrap_or_default() {
        let _ = writeln!(text, "{}: {} studies", p.reviewer, p.studies.len());
        for id in &p.studies {
            let title = session.study(id).map_or("", |s| s.title.as_str());
            let _ = writeln!(text, "  {id}\t{title}");
        }
    }
    Ok(Output {
        text,
        payload: mutation(&session, &outcomes),
    })
}

fn log_time(ctx: &Ctx, a: LogTimeArgs) -> Result<Output, CliError> {
    let actor = a
        .who
        .or_else(|| ctx.actor.clone())
        .ok_or_else(|| CliError::user("missing_actor", "give --who or --actor"))?;
    let entry = TimingEntry {
        actor,
        task: a.task,
        phase: a.phase,
        minutes: parse_minutes(&a.minutes)?,
    };
    let text = format!(
        "logged {} for {} (phase {})\n",
        format_hhmm(entry.minutes),
        entry.actor,
        entry.phase
    );
    let (session, outcomes) = ctx.execute(vec![Command::RecordTiming { entry }])?;
    Ok(Output {
        text,
        payload: mutation(&session, &outcomes),
    })
}

fn round_view(ctx: &Ctx, a: RoundViewArgs) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let round = match a.round {
        Some(r) => r,
        None => latest_round(&session)?,
    };
    let view = session.round_view(round, a.reviewer.as_deref())?;
    let mut text = format!(
        "round {} ({:?}, criteria v{}): {} studies\n",
        view.index,
        view.status,
        view.criteria_version,
        view.batch.len()
    )
    .to_lowercase();
    for (rev, n) in &view.progress {
        let _ = writeln!(text, "{rev}: {n}/{} decided", view.batch.len());
    }
    for id in &view.batch {
        let _ = write!(text, "{id}");
        for (rev, ds) in &view.decisions {
            if let Some(d) = ds.get(id) {
                let _ = write!(
                    text,
                    "\t{rev}={} {}",
                    d.verdict.as_yn(),
                    CriterionRef::format_list(&d.cited)
                );
            }
        }
        if let Some(r) = view.resolutions.get(id) {
            let _ = write!(text, "\tresolved={}", r.verdict.as_yn());
        }
        text.push('\n');
    }
    if let Some(report) = &view.report {
        let _ = writeln!(text, "{}", kappa_line(report));
        text.push_str(&stats_lines(report));
    }
    Ok(Output {
        text,
        payload: serde_json::to_value(&view).expect("serializable"),
    })
}

fn what_if(ctx: &Ctx, a: WhatIfArgs) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let verdict = parse_verdict(&a.verdict)?;
    let report = session.what_if(a.round, &a.reviewer, &a.study, verdict)?;
    let mut text = format!(
        "round {} if {} judged {} as {}: {}\n",
        a.round,
        a.reviewer,
        a.study,
        verdict.as_yn(),
        kappa_line(&report)
    );
    text.push_str(&stats_lines(&report));
    Ok(Output {
        text,
        payload: json!({ "report": report, "display": report.display() }),
    })
}

fn summary(ctx: &Ctx) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let s = session.summary();
    let mut text = format!(
        "{}; {} studies, {} rounds ({} closed)\n",
        s.phase, s.catalog_size, s.rounds, s.rounds_closed
    );
    let ks: Vec<String> = s
        .kappa_trajectory
        .iter()
        .map(|k| k.map_or_else(|| "undef".into(), |k| format!("{k:.2}")))
        .collect();
    let _ = writeln!(text, "kappa: {}", ks.join(" → "));
    for v in &s.criteria_versions {
        let _ = write!(
            text,
            "criteria v{}: {} IC, {} EC",
            v.version, v.inclusion, v.exclusion
        );
        if !v.change_note.is_empty() {
            let _ = write!(text, " ({})", v.change_note);
        }
        text.push('\n');
    }
    let _ = writeln!(
        text,
        "phase 1: {} reviewed, {} included",
        s.phase1.reviewed, s.phase1.included
    );
    let _ = writeln!(
        text,
        "phase 2: {} reviewed, {} included",
        s.phase2.reviewed, s.phase2.included
    );
    for (rev, c) in &s.phase2_by_reviewer {
        let _ = writeln!(text, "  {rev}: {} reviewed, {} included", c.reviewed, c.included);
    }
    let _ = writeln!(
        text,
        "total: {} included of {} decided, {} pending",
        s.total_included, s.total_decided, s.pending
    );
    Ok(Output {
        text,
        payload: serde_json::to_value(&s).expect("serializable"),
    })
}

fn report(ctx: &Ctx, a: ReportArgs) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let round = match a.round {
        Some(r) => r,
        None => latest_round(&session)?,
    };
    let csv = kappagate_core::store::export_round_report(&session, round)?;
    let text = match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            format!("wrote {}\n", path.display())
        }
        None => csv.clone(),
    };
    Ok(Output {
        text,
        payload: json!({ "round": round, "report": csv }),
    })
}

fn savings(ctx: &Ctx) -> Result<Output, CliError> {
    let (_, session) = ctx.load()?;
    let fitted = fit_model(&session)?;
    let line = fitted.actual.summary_line();
    let text = format!(
        "{line}\nvelocity {:.4} studies/min over {} phase-2 studies; dual phase {} min\n",
        fitted.model.velocity(),
        fitted.phase2_studies,
        fitted.model.dual_minutes()
    );
    Ok(Output {
        text,
        payload: json!({ "fitted": fitted, "line": line }),
    })
}

fn curve(ctx: &Ctx, a: CurveArgs) -> Result<Output, CliError> {
    let model = match (a.velocity, a.dual_minutes) {
        (Some(v), Some(t0)) => TimeModel::new(v, t0)?,
        _ => fit_model(&ctx.load()?.1)?.model,
    };
    let curve = projection_curve(&model, a.max_studies, a.steps)?;
    let csv = curve.to_csv();
    let text = match &a.out {
        Some(path) => {
            write_file(path, &csv)?;
            format!("wrote {}\n", path.display())
        }
        None => csv,
    };
    Ok(Output {
        text,
        payload: serde_json::to_value(&curve).expect("serializable"),
    })
}

fn verify(ctx: &Ctx) -> Result<Output, CliError> {
    let store = ctx.store()?;
    let session = store.verify()?;
    let events = store.audit_log().read()?.len();
    Ok(Output {
        text: format!(
            "ok: {events} audit events replay to revision {}\n",
            session.revision()
        ),
        payload: json!({ "ok": true, "events": events, "revision": session.revision() }),
    })
}

fn serve(a: ServeArgs) -> Result<Output, CliError> {
    let config = ServiceConfig::load(&a.config)
        .map_err(|e| CliError::user("invalid_config", e.to_string()))?;
    let bind = config.bind.clone();
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::Internal {
            code: "runtime".into(),
            message: e.to_string(),
        })?;
    eprintln!("listening on {bind}");
    runtime
        .block_on(kappagate_service::serve(config))
        .map_err(|e| CliError::Internal {
            code: "io_error".into(),
            message: e.to_string(),
        })?;
    Ok(Output {
        text: String::new(),
        payload: Value::Null,
    })
}
