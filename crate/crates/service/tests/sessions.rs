use std::sync::Arc;

use serde_json::json;
use takeover_core::intervention::RemindMethod;
use takeover_core::{Task, TimeBudget};
use takeover_service::events::read_jsonl;
use takeover_service::{
    replay_file, DecisionRequest, Event, LiveSession, LiveState, ManualClock, ServiceError, SessionRequest, SessionStore,
    TimeoutMode,
};

fn open(name: &str, method: RemindMethod) -> LiveSession {
    LiveSession::open("s".into(), &SessionRequest::preset(name, method), 0).unwrap()
}

fn answer(trial_id: u32, decision: &str, ms: i64) -> DecisionRequest {
    DecisionRequest {
        trial_id,
        decision: Some(decision.to_string()),
        decision_time_ms: Some(ms),
    }
}

#[test]
fn study3_session_has_36_trials() {
    let mut s = open("study3", RemindMethod::NoAlert);
    assert_eq!(s.trials().len(), 36);
    assert_eq!(s.state(), LiveState::Created);
    let p = s.advance(0).unwrap();
    let budgets = [0.5, 1.5, 2.5].map(|b| TimeBudget::seconds(b).unwrap());
    assert!(budgets.contains(&p.time_budget));
    assert!((2_000..=5_000).contains(&p.drive_phase_ms));
    assert_eq!(s.state(), LiveState::AwaitingDecision);
}

#[test]
fn config_errors() {
    let mut req = SessionRequest::preset("study3", RemindMethod::NoAlert);
    req.config = json!({
        "seed": 1, "tasks": ["Overtake"], "accuracy_levels": [1.5], "time_budgets": [0.5],
        "repetitions_per_cell": 1, "truth_mode": "balanced", "ordering": "latin_square"
    });
    assert!(matches!(LiveSession::open("x".into(), &req, 0), Err(ServiceError::Config(_))));
    req.config = json!("study9");
    assert!(matches!(LiveSession::open("x".into(), &req, 0), Err(ServiceError::Config(_))));
}

#[test]
fn state_machine_rejects_misuse() {
    let mut s = open("study3", RemindMethod::NoAlert);
    let first = s.trials()[0].trial_id;
    assert!(matches!(s.submit(10, &answer(first, "first", 1)), Err(ServiceError::OutOfOrder(_))));
    let p = s.advance(0).unwrap();
    assert!(matches!(s.advance(1), Err(ServiceError::OutOfOrder(_))));
    assert!(matches!(s.submit(10, &answer(9_999, "first", 1)), Err(ServiceError::UnknownTrial(9_999))));
    let bad = answer(p.trial_id, "sideways", 1);
    assert!(matches!(s.submit(10, &bad), Err(ServiceError::InvalidDecision(_))));
    let t = p.served_at_ms + p.drive_phase_ms + 100;
    let ack = s.submit(t, &answer(p.trial_id, "first", 100)).unwrap();
    assert!(!ack.timeout);
    assert_eq!(ack.server_decision_time_ms, 100);
    assert_eq!(s.state(), LiveState::InTrial);
    assert_eq!(
        s.submit(t + 1, &answer(p.trial_id, "second", 1)),
        Err(ServiceError::DuplicateSubmission(p.trial_id))
    );
}

// Plays every trial, answering `delay_ms` after the suggestion.
fn play(s: &mut LiveSession, mut now: u64, delay_ms: u64, pick: impl Fn(&takeover_service::TrialPayload) -> String) -> u64 {
    while s.state() != LiveState::Finished {
        let p = s.advance(now).unwrap();
        now = p.served_at_ms + p.drive_phase_ms + delay_ms;
        s.submit(now, &answer(p.trial_id, &pick(&p), delay_ms as i64)).unwrap();
        now += 500;
    }
    now
}

#[test]
fn late_decisions_time_out_and_sound_the_alarm() {
    let mut s = open("study3", RemindMethod::NoAlert);
    let p = s.advance(0).unwrap();
    let budget = p.time_budget_ms.unwrap() as u64;
    let late = p.served_at_ms + p.drive_phase_ms + budget + 100;
    let ack = s.submit(late, &answer(p.trial_id, "first", (budget + 100) as i64)).unwrap();
    assert!(ack.timeout);
    assert_eq!(ack.decision, None);
    let alarm = ack.alarm.unwrap();
    assert_eq!((alarm.beep_count, alarm.frequency_hz), (3, 2500.0));
    assert!(matches!(s.events().last(), Some(Event::Timeout(t)) if t.submitted.is_some()));
    let summary = s.summary();
    assert_eq!(summary.summary.n_timeouts, 1);
    assert_eq!(summary.summary.aag, None);
    assert_eq!(summary.summary.follow_rate, None);
}

#[test]
fn exact_budget_is_in_time() {
    let mut s = open("study3", RemindMethod::NoAlert);
    let p = s.advance(0).unwrap();
    let t = p.deadline_ms.unwrap();
    assert!(!s.submit(t, &answer(p.trial_id, "first", 0)).unwrap().timeout);
}

#[test]
fn wait_forever_accepts_late_decisions() {
    let mut req = SessionRequest::preset("study3", RemindMethod::NoAlert);
    req.timeout_mode = TimeoutMode::WaitForever;
    let mut s = LiveSession::open("w".into(), &req, 0).unwrap();
    let p = s.advance(0).unwrap();
    assert_eq!(p.deadline_ms, None);
    let ack = s.submit(p.served_at_ms + 60_000, &answer(p.trial_id, "second", 0)).unwrap();
    assert!(!ack.timeout);
    assert!(ack.divergent);
}

#[test]
fn expired_trial_closes_on_advance() {
    let mut s = open("study3", RemindMethod::NoAlert);
    let p = s.advance(0).unwrap();
    let next = s.advance(p.deadline_ms.unwrap() + 1).unwrap();
    assert_ne!(next.trial_id, p.trial_id);
    assert_eq!(s.records().len(), 1);
    assert!(!s.records()[0].is_complete());
}

#[test]
fn aag_method_alerts_inside_the_matrix() {
    let mut s = open("study4", RemindMethod::AagBased);
    let mut now = 0;
    let mut seen = 0;
    while s.state() != LiveState::Finished {
        let p = s.advance(now).unwrap();
        let expected = matches!(p.task, Task::Overtake | Task::RouteSelection)
            && matches!(p.time_budget_ms, Some(500) | Some(1500));
        assert_eq!(p.alert.trigger, expected, "{:?} {:?}", p.task, p.time_budget);
        seen += expected as u32;
        now = p.served_at_ms + p.drive_phase_ms + 200;
        s.submit(now, &answer(p.trial_id, "first", 200)).unwrap();
    }
    let alerts = s.events().iter().filter(|e| matches!(e, Event::AlertEmitted(_))).count();
    assert_eq!(alerts as u32, seen);
    assert_eq!(seen, 8);
}

#[test]
fn always_following_at_high_accuracy_is_near_optimal() {
    let mut req = SessionRequest::preset("study2", RemindMethod::NoAlert);
    req.config = json!({
        "seed": 5, "tasks": ["AvoidCollision", "Overtake", "RouteSelection"], "accuracy_levels": [0.99],
        "time_budgets": ["unlimited"], "repetitions_per_cell": 2, "truth_mode": "representative",
        "ordering": "latin_square"
    });
    let mut s = LiveSession::open("f".into(), &req, 0).unwrap();
    play(&mut s, 0, 800, |p| p.suggestion_label.clone());
    let sum = s.summary();
    assert_eq!(sum.state, LiveState::Finished);
    assert_eq!(sum.summary.follow_rate, Some(1.0));
    assert!(sum.summary.gap_ratio.unwrap() < 0.01);
}

#[test]
fn replay_reproduces_summary() {
    let mut s = open("study3", RemindMethod::AlwaysAlert);
    // alternate following and deviating, with some timeouts
    let mut now = 0;
    let mut k = 0;
    while s.state() != LiveState::Finished {
        let p = s.advance(now).unwrap();
        let delay = if k % 5 == 4 { 3_000 } else { 300 + 37 * k };
        now = p.served_at_ms + p.drive_phase_ms + delay;
        let pick = if k % 2 == 0 { "first" } else { "second" };
        s.submit(now, &answer(p.trial_id, pick, delay as i64 + 20)).unwrap();
        k += 1;
    }
    let replayed = LiveSession::replay(s.events().to_vec()).unwrap();
    assert_eq!(replayed.summary(), s.summary());
    assert_eq!(replayed.events(), s.events());
    let text = serde_json::to_string(&s.summary()).unwrap();
    assert_eq!(serde_json::to_string(&replayed.summary()).unwrap(), text);
    assert!(s.summary().summary.n_timeouts > 0);
}

#[test]
fn replay_rejects_tampered_logs() {
    let mut s = open("study3", RemindMethod::NoAlert);
    let p = s.advance(0).unwrap();
    s.submit(p.deadline_ms.unwrap(), &answer(p.trial_id, "first", 0)).unwrap();
    let mut events = s.events().to_vec();
    events.swap(1, 2);
    assert!(matches!(LiveSession::replay(events), Err(ServiceError::Replay(_))));
    assert!(matches!(LiveSession::replay(Vec::new()), Err(ServiceError::Replay(_))));
}

#[test]
fn sessions_are_deterministic_in_seed_and_decisions() {
    let run = || {
        let mut s = open("study3", RemindMethod::AagBased);
        play(&mut s, 0, 400, |p| p.options[0].label.clone());
        s.summary()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.summary, b.summary);
}

#[test]
fn store_persists_and_replays_logs() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::default());
    let store = SessionStore::new(Some(dir.path().to_path_buf()), clock.clone()).unwrap();
    let id = store.create(&SessionRequest::preset("study3", RemindMethod::AagBased)).unwrap().session_id;
    let other = store.create(&SessionRequest::preset("study3", RemindMethod::AagBased)).unwrap().session_id;
    assert_ne!(id, other);
    for _ in 0..36 {
        clock.advance(250);
        let p = store.advance(&id).unwrap();
        clock.advance(p.drive_phase_ms + 420);
        store.submit(&id, &answer(p.trial_id, "second", 400)).unwrap();
    }
    let live = store.summary(&id).unwrap();
    assert_eq!(live.state, LiveState::Finished);
    assert!(matches!(store.advance(&id), Err(ServiceError::SessionFinished)));

    let path = store.log_path(&id).unwrap();
    let on_disk = std::fs::read_to_string(&path).unwrap();
    assert_eq!(on_disk, store.log(&id).unwrap());
    let events = read_jsonl(on_disk.as_bytes()).unwrap();
    assert!(matches!(events[0], Event::Created(_)));
    assert_eq!(events.iter().filter(|e| matches!(e, Event::Decision(_))).count(), 36);
    assert_eq!(replay_file(&path).unwrap().summary(), live);
    assert!(matches!(store.summary("nope"), Err(ServiceError::UnknownSession(_))));
}
