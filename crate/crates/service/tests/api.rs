use std::collections::BTreeMap;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{TimeZone, Utc};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use kappagate_core::agreement::{agreement_report, cohen_kappa, ContingencyTable};
use kappagate_core::casestudy;
use kappagate_core::protocol::Command;
use kappagate_core::store::{save_session, SessionStore};
use kappagate_service::api::request_for;
use kappagate_service::{router, AppState, Principal, Role};

const R1: &str = "tok-r1";
const R2: &str = "tok-r2";
const R3: &str = "tok-r3";

struct Harness {
    _dir: tempfile::TempDir,
    state: AppState,
    app: Router,
}

fn harness() -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let principal = |actor: &str, role| Principal {
        actor: actor.into(),
        role,
    };
    let tokens = BTreeMap::from([
        (R1.to_string(), principal("R1", Role::Reviewer)),
        (R2.to_string(), principal("R2", Role::Reviewer)),
        (R3.to_string(), principal("R3", Role::Coordinator)),
    ]);
    let state = AppState::new(dir.path(), tokens);
    Harness {
        app: router(state.clone()),
        state,
        _dir: dir,
    }
}

async fn call(app: &Router, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(path);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn token_for(reviewer: Option<&str>) -> &'static str {
    match reviewer {
        Some("R1") => R1,
        Some("R2") => R2,
        _ => R3,
    }
}

async fn send(app: &Router, id: &str, cmd: &Command) -> (StatusCode, String) {
    let r = request_for(id, cmd);
    call(app, r.method, &r.path, Some(token_for(r.reviewer.as_deref())), r.body).await
}

async fn run_script(app: &Router, id: &str, script: &[Command]) {
    for cmd in script {
        let (status, body) = send(app, id, cmd).await;
        assert!(status.is_success(), "{} -> {status}: {body}", cmd.name());
    }
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

#[tokio::test]
async fn case_study_over_http_matches_direct_replay() {
    let h = harness();
    run_script(&h.app, "case", &casestudy::script()).await;
    let store = SessionStore::new(h.state.session_path("case").unwrap());
    let stored = store.verify().unwrap();
    assert_eq!(save_session(&stored), save_session(&casestudy::session()));

    let (status, body) = call(&h.app, "GET", "/v1/sessions/case/summary", Some(R1), None).await;
    assert_eq!(status, StatusCode::OK);
    let summary = json(&body);
    assert_eq!(summary["phase1"]["included"], 31);
    assert_eq!(summary["total_included"], 100);

    let (_, body) = call(&h.app, "GET", "/v1/sessions/case/savings", Some(R3), None).await;
    assert_eq!(json(&body)["line"], "actual 10:44 vs traditional 14:38 → 26.7%");

    let (status, body) = call(&h.app, "GET", "/v1/sessions/case/rounds/1/report", Some(R2), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(body.contains("# k=0.70 k_max=0.74 k_min=-0.07 k_nor=0.73 S_D=0.00 P++=0.60"));

    let (status, body) = call(
        &h.app,
        "GET",
        "/v1/sessions/case/projection?max_studies=1000&steps=10",
        Some(R1),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let points = json(&body)["points"].as_array().unwrap().clone();
    assert_eq!(points.len(), 10);
    assert!(points.iter().all(|p| p["saving"].as_f64().unwrap() < 0.5));

    let (status, body) = call(&h.app, "GET", "/v1/sessions/case", Some(R1), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(json(&body)["phase"], "complete");
}

/// Session whose single round tabulates to (1,1,1,7).
async fn table_three(h: &Harness) -> Vec<String> {
    let at = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let catalog: Vec<Value> = (0..10)
        .map(|i| json!({"id": format!("t{i}"), "title": format!("Study {i}")}))
        .collect();
    let (status, body) = call(
        &h.app,
        "POST",
        "/v1/sessions",
        Some(R3),
        Some(json!({
            "id": "t3",
            "catalog": catalog,
            "reviewers": ["R1", "R2"],
            "criteria": {"inclusion": ["relevant"], "exclusion": ["off topic"]},
            "batch_size": 10,
            "seed": 3,
            "at": at,
        })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let (_, body) = call(&h.app, "POST", "/v1/sessions/t3/rounds", Some(R3), None).await;
    let batch: Vec<String> =
        serde_json::from_value(json(&body)["outcomes"][0]["batch"].clone()).unwrap();
    batch
}

fn verdict_body(study: &str, include: bool) -> Value {
    if include {
        json!({"study": study, "verdict": "include", "cited": ["IC1"]})
    } else {
        json!({"study": study, "verdict": "exclude", "cited": ["EC1"]})
    }
}

#[tokio::test]
async fn what_if_on_the_paradox_table() {
    let h = harness();
    let batch = table_three(&h).await;
    // slot 0: (I,I); slot 1: R1 E / R2 I; slot 2: R1 I / R2 E; rest (E,E)
    let plan = |i: usize| match i {
        0 => (true, true),
        1 => (false, true),
        2 => (true, false),
        _ => (false, false),
    };
    for (i, study) in batch.iter().enumerate() {
        let (v1, v2) = plan(i);
        let path = "/v1/sessions/t3/rounds/1/decisions";
        assert_eq!(call(&h.app, "POST", path, Some(R1), Some(verdict_body(study, v1))).await.0, StatusCode::OK);
        assert_eq!(call(&h.app, "POST", path, Some(R2), Some(verdict_body(study, v2))).await.0, StatusCode::OK);
    }
    let whatif = json!({"reviewer": "R2", "study": batch[2], "verdict": "include"});
    let (status, body) = call(&h.app, "POST", "/v1/sessions/t3/rounds/1/whatif", Some(R1), Some(whatif.clone())).await;
    assert_eq!(status, StatusCode::FORBIDDEN, "{body}");
    assert_eq!(json(&body)["error"], "blinded");

    let (status, body) = call(&h.app, "POST", "/v1/sessions/t3/rounds/1/close", Some(R3), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let report = &json(&body)["outcomes"][0]["report"]["report"];
    assert_eq!(report["kappa"]["defined"], 0.375);
    assert_eq!(report["paradox"]["flagged"], true);

    let (status, body) = call(&h.app, "POST", "/v1/sessions/t3/rounds/1/whatif", Some(R1), Some(whatif)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let got = json(&body);
    let expected_table = ContingencyTable::new(2, 1, 0, 7).unwrap();
    assert_eq!(got["report"]["table"], json!({"a": 2, "b": 1, "c": 0, "d": 7}));
    let expected = agreement_report(&expected_table);
    assert_eq!(
        got["report"]["kappa"]["defined"].as_f64(),
        expected.kappa.value()
    );
    let k = cohen_kappa(&expected_table).unwrap();
    assert_eq!((*k.numer(), *k.denom()), (14, 19));
    assert_eq!(got["display"]["k"], "0.74");

    // read-only: the stored round is unchanged
    let (_, body) = call(&h.app, "GET", "/v1/sessions/t3/rounds/1", Some(R3), None).await;
    assert_eq!(json(&body)["report"]["table"], json!({"a": 1, "b": 1, "c": 1, "d": 7}));
}

#[tokio::test]
async fn mid_round_responses_never_show_the_other_reviewer() {
    let h = harness();
    let batch = table_three(&h).await;
    for study in &batch[..5] {
        let path = "/v1/sessions/t3/rounds/1/decisions";
        call(&h.app, "POST", path, Some(R1), Some(verdict_body(study, true))).await;
        call(&h.app, "POST", path, Some(R2), Some(verdict_body(study, false))).await;
    }
    let reads = [
        "/v1/sessions/t3",
        "/v1/sessions/t3/rounds",
        "/v1/sessions/t3/rounds/1",
        "/v1/sessions/t3/rounds/1/report",
        "/v1/sessions/t3/summary",
        "/v1/sessions/t3/criteria",
        "/v1/sessions/t3/partitions",
        "/v1/sessions/t3/timings",
        "/v1/sessions/t3/document",
    ];
    for path in reads {
        for (token, other) in [(R1, "R2"), (R2, "R1"), (R3, "R1"), (R3, "R2")] {
            let (_, body) = call(&h.app, "GET", path, Some(token), None).await;
            assert!(
                !body.contains(&format!("\"reviewer\":\"{other}\"")),
                "{path} as {token} leaks {other}: {body}"
            );
            assert!(!body.contains("\"verdict\":\"exclude\"") || token == R2, "{path} {body}");
        }
    }
    let (status, body) = call(&h.app, "GET", "/v1/sessions/t3/rounds/1", Some(R1), None).await;
    assert_eq!(status, StatusCode::OK);
    let view = json(&body);
    assert_eq!(view["decisions"]["R1"].as_object().unwrap().len(), 5);
    assert!(view["decisions"].get("R2").is_none());
    assert_eq!(view["progress"]["R2"], 5);

    let (status, body) = call(&h.app, "GET", "/v1/sessions/t3/document", Some(R3), None).await;
    assert_eq!((status, json(&body)["error"].clone()), (StatusCode::FORBIDDEN, json!("blinded")));
    let (status, _) = call(&h.app, "GET", "/v1/sessions/t3/rounds/1/report", Some(R1), None).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn simultaneous_closes_one_wins() {
    let h = harness();
    let batch = table_three(&h).await;
    for study in &batch {
        let path = "/v1/sessions/t3/rounds/1/decisions";
        call(&h.app, "POST", path, Some(R1), Some(verdict_body(study, true))).await;
        call(&h.app, "POST", path, Some(R2), Some(verdict_body(study, true))).await;
    }
    let close = "/v1/sessions/t3/rounds/1/close";
    let (a, b) = tokio::join!(
        call(&h.app, "POST", close, Some(R3), None),
        call(&h.app, "POST", close, Some(R3), None)
    );
    let mut statuses = [a.0, b.0];
    statuses.sort();
    assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
}

#[tokio::test]
async fn stale_revision_conflicts() {
    let h = harness();
    table_three(&h).await;
    let (_, body) = call(&h.app, "GET", "/v1/sessions/t3", Some(R3), None).await;
    let rev = json(&body)["revision"].as_u64().unwrap();
    let (_, body) = call(&h.app, "GET", "/v1/sessions/t3/rounds/1", Some(R1), None).await;
    let study = json(&body)["batch"][0].as_str().unwrap().to_string();
    let path = format!("/v1/sessions/t3/rounds/1/decisions?revision={rev}");
    let (s1, _) = call(&h.app, "POST", &path, Some(R1), Some(verdict_body(&study, true))).await;
    let (s2, body) = call(&h.app, "POST", &path, Some(R2), Some(verdict_body(&study, true))).await;
    assert_eq!(s1, StatusCode::OK);
    assert_eq!(s2, StatusCode::CONFLICT);
    assert_eq!(json(&body)["error"], "stale_revision");
    // without a revision, concurrent decisions by different reviewers both land
    let plain = "/v1/sessions/t3/rounds/1/decisions";
    let (s3, _) = call(&h.app, "POST", plain, Some(R2), Some(verdict_body(&study, true))).await;
    assert_eq!(s3, StatusCode::OK);
}

#[tokio::test]
async fn errors_carry_status_and_reason_codes() {
    let h = harness();
    let batch = table_three(&h).await;
    let decide = "/v1/sessions/t3/rounds/1/decisions";

    let (s, _) = call(&h.app, "GET", "/v1/sessions/t3", None, None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&h.app, "GET", "/v1/sessions/t3", Some("nope"), None).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&h.app, "GET", "/v1/sessions/missing", Some(R1), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&h.app, "GET", "/v1/sessions/t3/rounds/9", Some(R1), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, body) = call(&h.app, "POST", decide, Some(R3), Some(verdict_body(&batch[0], true))).await;
    assert_eq!((s, json(&body)["error"].clone()), (StatusCode::FORBIDDEN, json!("forbidden")));
    let (s, _) = call(&h.app, "POST", "/v1/sessions/t3/rounds", Some(R1), None).await;
    assert_eq!(s, StatusCode::FORBIDDEN);

    let (s, body) = call(&h.app, "POST", "/v1/sessions/t3/rounds", Some(R3), None).await;
    assert_eq!((s, json(&body)["error"].clone()), (StatusCode::CONFLICT, json!("round_already_open")));

    let (s, body) = call(
        &h.app,
        "POST",
        decide,
        Some(R1),
        Some(json!({"study": batch[0], "verdict": "exclude"})),
    )
    .await;
    assert_eq!((s, json(&body)["error"].clone()), (StatusCode::BAD_REQUEST, json!("missing_criterion")));

    let (s, body) = call(&h.app, "POST", decide, Some(R1), Some(json!({"study": 1}))).await;
    assert_eq!((s, json(&body)["error"].clone()), (StatusCode::BAD_REQUEST, json!("invalid_payload")));

    let (s, body) = call(&h.app, "POST", "/v1/sessions/t3/rounds/1/close", Some(R3), None).await;
    assert_eq!((s, json(&body)["error"].clone()), (StatusCode::BAD_REQUEST, json!("incomplete_decisions")));

    let (s, body) = call(
        &h.app,
        "POST",
        "/v1/sessions/t3/timings",
        Some(R1),
        Some(json!({"actor": "R2", "task": "screening", "phase": 1, "minutes": 5})),
    )
    .await;
    assert_eq!(s, StatusCode::FORBIDDEN, "{body}");

    let (s, body) = call(&h.app, "GET", "/v1/sessions/t3/savings", Some(R3), None).await;
    assert_eq!((s, json(&body)["error"].clone()), (StatusCode::BAD_REQUEST, json!("session_incomplete")));

    let (s, body) = call(&h.app, "GET", "/v1/sessions/bad%20id", Some(R3), None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{body}");
}

#[tokio::test]
async fn create_from_catalog_text_deduplicates() {
    let h = harness();
    let csv = "id,title,source,year\n1,Kappa in SE,ACM,2017\n2,KAPPA in SE!,IEEE,2017\n3,Other,ACM,2018\n";
    let body = json!({
        "id": "dedup",
        "catalog_csv": csv,
        "reviewers": ["R1", "R2"],
        "criteria": {"inclusion": ["a"], "exclusion": ["b"]},
    });
    let (s, text) = call(&h.app, "POST", "/v1/sessions", Some(R3), Some(body.clone())).await;
    assert_eq!(s, StatusCode::CREATED, "{text}");
    let created = json(&text);
    assert_eq!(created["studies"], 2);
    assert_eq!(created["dedup"]["duplicates"].as_array().unwrap().len(), 1);
    let (s, text) = call(&h.app, "POST", "/v1/sessions", Some(R3), Some(body)).await;
    assert_eq!((s, json(&text)["error"].clone()), (StatusCode::CONFLICT, json!("session_exists")));
}
