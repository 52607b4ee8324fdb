mod common;

use advice_core::lang::AdviceSentence;
use advice_core::lang::AdviceKind;
use advice_core::protocols::{AdvisorEvent, Input, ProtocolKind, Session, SessionExample};
use advice_core::world::Head;
use blocks_advice::store::{replay, SessionStore};

#[test]
fn log_replay_rebuilds_byte_identical_sessions() {
    let d = common::dataset();
    let models = common::tiny_models(&d);
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");

    let store = SessionStore::with_log(&log, &models).unwrap();
    let mut ids = Vec::new();
    for (i, p) in ProtocolKind::ALL.into_iter().enumerate() {
        let s = Session::new(format!("s{i}"), p, SessionExample::from(&d.test[i]), &models, 100 + i as u64);
        ids.push(store.create(s, &models).unwrap().id);
    }
    let cell = store.get("s1").unwrap();
    let advice = AdvisorEvent::advice(Head::Target, AdviceSentence::free_text("the target is in the lower left", AdviceKind::Restrictive));
    store.apply(&cell, Input::Feedback(vec![advice]), &models).unwrap();
    let cell = store.get("s3").unwrap();
    store
        .apply(&cell, Input::Feedback(vec![AdvisorEvent::retry(Head::Source), AdvisorEvent::accept(Head::Target)]), &models)
        .unwrap();
    // a rejected input is not logged
    assert!(store.apply(&cell, Input::Predict, &models).is_err());

    let rebuilt = replay(&log, &models).unwrap();
    assert_eq!(rebuilt.len(), ids.len());
    for id in &ids {
        let live = serde_json::to_string(&store.snapshot(id).unwrap()).unwrap();
        let again = serde_json::to_string(&rebuilt[id]).unwrap();
        assert_eq!(live, again, "session {id}");
    }

    // reopening restores the sessions and keeps appending
    drop(store);
    let reopened = SessionStore::with_log(&log, &models).unwrap();
    assert_eq!(reopened.len(), ids.len());
    assert_eq!(reopened.snapshot("s1").unwrap().history.len(), 2);
}

#[test]
fn corrupt_log_lines_are_reported_with_their_line_number() {
    let d = common::dataset();
    let models = common::tiny_models(&d);
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    std::fs::write(&log, "{\"op\":\"step\",\"id\":\"ghost\",\"input\":\"Predict\"}\n").unwrap();
    let err = replay(&log, &models).unwrap_err().to_string();
    assert!(err.contains("line 1") && err.contains("ghost"), "{err}");
}
