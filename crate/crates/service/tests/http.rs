use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use takeover_service::{router, ManualClock, SessionStore};

struct Harness {
    app: axum::Router,
    clock: Arc<ManualClock>,
}

impl Harness {
    fn new() -> Self {
        let clock = Arc::new(ManualClock::default());
        let store = SessionStore::new(None, clock.clone()).unwrap();
        Self {
            app: router(Arc::new(store)),
            clock,
        }
    }

    async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
        let req = req
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn json(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (s, text) = self.call(method, uri, body).await;
        (s, serde_json::from_str(&text).unwrap())
    }
}

#[tokio::test]
async fn full_session_over_http() {
    let h = Harness::new();
    let (s, created) = h.json("POST", "/sessions", Some(json!({"config": "study3", "remind_method": "aag", "seed": 7}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(created["n_trials"], 36);
    let id = created["session_id"].as_str().unwrap().to_string();

    let (s, summary) = h.json("GET", &format!("/sessions/{id}/summary"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(summary["aag"], Value::Null);
    assert_eq!(summary["state"], "Created");

    for i in 0..36 {
        let (s, trial) = h.json("POST", &format!("/sessions/{id}/advance"), None).await;
        assert_eq!(s, StatusCode::OK, "{trial}");
        if i == 0 {
            let (s, err) = h.json("POST", &format!("/sessions/{id}/advance"), None).await;
            assert_eq!(s, StatusCode::CONFLICT);
            assert_eq!(err["error"], "OutOfOrder");
        }
        h.clock.advance(trial["drive_phase_ms"].as_u64().unwrap() + 300);
        let body = json!({"trial_id": trial["trial_id"], "decision": trial["suggestion"], "decision_time_ms": 310});
        let (s, ack) = h.json("POST", &format!("/sessions/{id}/decision"), Some(body.clone())).await;
        assert_eq!(s, StatusCode::OK);
        assert_eq!(ack["timeout"], false);
        assert_eq!(ack["divergent"], false);
        if i == 0 {
            let (s, err) = h.json("POST", &format!("/sessions/{id}/decision"), Some(body)).await;
            assert_eq!(s, StatusCode::CONFLICT);
            assert_eq!(err["error"], "DuplicateSubmission");
        }
    }
    let (s, err) = h.json("POST", &format!("/sessions/{id}/advance"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(err["error"], "SessionFinished");

    let (_, summary) = h.json("GET", &format!("/sessions/{id}/summary"), None).await;
    assert_eq!(summary["state"], "Finished");
    assert_eq!(summary["follow_rate"], 1.0);
    assert_eq!(summary["records"].as_array().unwrap().len(), 36);

    let (s, log) = h.call("GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(s, StatusCode::OK);
    let kinds: Vec<String> = log
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["event"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds[0], "created");
    assert_eq!(kinds.iter().filter(|k| *k == "trial_served").count(), 36);
    assert_eq!(kinds.iter().filter(|k| *k == "decision").count(), 36);
    assert!(kinds.iter().any(|k| k == "alert_emitted"));
}

#[tokio::test]
async fn errors_map_to_statuses() {
    let h = Harness::new();
    let (s, err) = h.json("POST", "/sessions", Some(json!({"config": "nope"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "ConfigError");
    let bad = json!({"config": {"seed": 1, "tasks": ["Overtake"], "accuracy_levels": [1.5], "time_budgets": [0.5],
        "repetitions_per_cell": 1, "truth_mode": "balanced", "ordering": "latin_square"}});
    let (s, err) = h.json("POST", "/sessions", Some(bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "ConfigError");
    let (s, err) = h.json("GET", "/sessions/missing/summary", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "UnknownSession");

    let (_, created) = h.json("POST", "/sessions", Some(json!({"config": "study3"}))).await;
    let id = created["session_id"].as_str().unwrap();
    h.json("POST", &format!("/sessions/{id}/advance"), None).await;
    let (s, err) = h
        .json("POST", &format!("/sessions/{id}/decision"), Some(json!({"trial_id": 4242, "decision": "first"})))
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "UnknownTrial");
}

#[tokio::test]
async fn timeout_ack_carries_alarm() {
    let h = Harness::new();
    let (_, created) = h.json("POST", "/sessions", Some(json!({"config": "study3"}))).await;
    let id = created["session_id"].as_str().unwrap();
    let (_, trial) = h.json("POST", &format!("/sessions/{id}/advance"), None).await;
    let budget = trial["time_budget_ms"].as_u64().unwrap();
    h.clock.advance(trial["drive_phase_ms"].as_u64().unwrap() + budget + 100);
    let body = json!({"trial_id": trial["trial_id"], "decision": trial["options"][1]["label"], "decision_time_ms": budget + 90});
    let (_, ack) = h.json("POST", &format!("/sessions/{id}/decision"), Some(body)).await;
    assert_eq!(ack["timeout"], true);
    assert_eq!(ack["alarm"], json!({"beep_count": 3, "beep_length_s": 0.2, "gap_s": 0.2, "frequency_hz": 2500.0}));
    let (_, log) = h.call("GET", &format!("/sessions/{id}/log"), None).await;
    assert!(log.lines().last().unwrap().contains("\"event\":\"timeout\""));
}
